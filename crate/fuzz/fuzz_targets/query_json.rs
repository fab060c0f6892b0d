// Copyright (c) The Sentiflow Authors
// SPDX-License-Identifier: Apache-2.0

#![no_main]

use libfuzzer_sys::fuzz_target;
use sentiflow_core::aggregate::{window_of, Query};

fuzz_target!(|data: &[u8]| {
    let Ok(q) = serde_json::from_slice::<Query>(data) else { return };
    if q.validate().is_ok() {
        for c in [q.t_start, q.t_end - 1, q.t_start + (q.t_end - q.t_start) / 2] {
            let w = window_of(c, q.t_start, q.t_end, q.window_ms).expect("in range");
            assert!(w <= c && c - w < q.window_ms);
        }
    }
});
