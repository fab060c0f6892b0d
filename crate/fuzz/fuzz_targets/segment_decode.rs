// Copyright (c) The Sentiflow Authors
// SPDX-License-Identifier: Apache-2.0

#![no_main]

use libfuzzer_sys::fuzz_target;
use sentiflow_core::storage::segment::{decode_segment, Tail};

fuzz_target!(|data: &[u8]| {
    if let Ok(decoded) = decode_segment(data) {
        assert!(decoded.valid_len <= data.len());
        // The valid prefix decodes cleanly to the same entries.
        let prefix = decode_segment(&data[..decoded.valid_len]).expect("valid prefix keeps its magic");
        assert_eq!(prefix.tail, Tail::Clean);
        assert_eq!(prefix.entries, decoded.entries);
    }
});
