#![no_main]

use homeflex::profiles::{parse_scenario_files, ScenarioFiles};
use libfuzzer_sys::fuzz_target;

// Files are separated by a line holding only `%%`, in the order meta, grid,
// weather, thermal, then one per home.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let mut parts = text.split("\n%%\n").map(str::to_owned);
    let files = ScenarioFiles {
        meta: parts.next().unwrap_or_default(),
        grid: parts.next().unwrap_or_default(),
        weather: parts.next().unwrap_or_default(),
        thermal: parts.next().unwrap_or_default(),
        homes: parts.collect(),
    };
    if let Ok(s) = parse_scenario_files(&files) {
        let again = parse_scenario_files(&ScenarioFiles::from_scenario(&s)).expect("written scenario parses");
        assert_eq!(again, s);
    }
});
