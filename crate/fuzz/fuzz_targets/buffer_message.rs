// Copyright (c) The Sentiflow Authors
// SPDX-License-Identifier: Apache-2.0

#![no_main]

use libfuzzer_sys::fuzz_target;
use sentiflow_core::message::{InputMessage, OutputMessage};

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = InputMessage::from_bytes(data) {
        assert_eq!(InputMessage::from_bytes(&m.to_bytes()).unwrap(), m);
    }
    if let Ok(m) = OutputMessage::from_bytes(data) {
        assert_eq!(OutputMessage::from_bytes(&m.to_bytes()).unwrap(), m);
    }
});
