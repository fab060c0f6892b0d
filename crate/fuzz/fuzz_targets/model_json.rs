// Copyright (c) The Sentiflow Authors
// SPDX-License-Identifier: Apache-2.0

#![no_main]

use libfuzzer_sys::fuzz_target;
use sentiflow_core::pipeline::model::NbModel;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(model) = NbModel::from_json(text) {
        let again = NbModel::from_json(&model.to_json()).expect("saved model loads");
        assert_eq!(again.version(), model.version());
        assert_eq!(again.vocabulary_size(), model.vocabulary_size());
    }
});
