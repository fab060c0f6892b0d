// Copyright (c) The Sentiflow Authors
// SPDX-License-Identifier: Apache-2.0

#![no_main]

use libfuzzer_sys::fuzz_target;
use sentiflow_core::pipeline::resources::{Gazetteer, Lexicon, TagLexicon};

// One input feeds all three TSV resource parsers.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = Lexicon::parse(text);
    let _ = Gazetteer::parse(text);
    let _ = TagLexicon::parse(text);
});
