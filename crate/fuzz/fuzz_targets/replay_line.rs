// Copyright (c) The Sentiflow Authors
// SPDX-License-Identifier: Apache-2.0

#![no_main]

use libfuzzer_sys::fuzz_target;
use sentiflow_core::ingest::{parse_replay_line, write_replay};

fuzz_target!(|data: &[u8]| {
    let Ok(line) = std::str::from_utf8(data) else { return };
    if let Ok(post) = parse_replay_line(line) {
        let written = write_replay(std::slice::from_ref(&post));
        let again = parse_replay_line(written.trim_end()).expect("written line parses");
        assert_eq!(again, post);
    }
});
