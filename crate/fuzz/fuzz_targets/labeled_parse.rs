// Copyright (c) The Sentiflow Authors
// SPDX-License-Identifier: Apache-2.0

#![no_main]

use libfuzzer_sys::fuzz_target;
use sentiflow_core::pipeline::parse_labeled;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(docs) = parse_labeled(text) {
        assert!(docs.len() <= text.lines().count());
    }
});
