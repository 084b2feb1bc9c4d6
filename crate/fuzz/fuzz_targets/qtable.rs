#![no_main]

use homeflex::marl::{parse_qtable, write_qtable};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(table) = parse_qtable(text) {
        let again = parse_qtable(&write_qtable(&table)).expect("written table parses");
        assert_eq!(write_qtable(&again), write_qtable(&table));
    }
});
