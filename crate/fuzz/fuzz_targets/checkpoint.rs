#![no_main]

use homeflex::neural::{parse_checkpoint, write_checkpoint};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(net) = parse_checkpoint(text) {
        let again = parse_checkpoint(&write_checkpoint(&net)).expect("written checkpoint parses");
        assert_eq!(again.spec(), net.spec());
        assert!(again.params().iter().zip(net.params()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
});
