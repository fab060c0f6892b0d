// Copyright (c) The Sentiflow Authors
// SPDX-License-Identifier: Apache-2.0

#![no_main]

use libfuzzer_sys::fuzz_target;
use sentiflow_core::config::SystemConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(config) = SystemConfig::parse(text) {
        assert_eq!(SystemConfig::parse(&config.to_toml()).unwrap(), config);
    }
});
