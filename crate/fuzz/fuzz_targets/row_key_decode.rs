// Copyright (c) The Sentiflow Authors
// SPDX-License-Identifier: Apache-2.0

#![no_main]

use libfuzzer_sys::fuzz_target;
use sentiflow_core::storage::{RowKey, MAX_BUCKETS};

fuzz_target!(|data: &[u8]| {
    if let Ok(key) = RowKey::decode(data) {
        let bytes = key.encode(MAX_BUCKETS).expect("decoded bucket fits");
        assert_eq!(RowKey::decode(&bytes).unwrap(), key);
    }
});
