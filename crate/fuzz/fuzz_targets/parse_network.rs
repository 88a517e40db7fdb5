#![no_main]

use libfuzzer_sys::fuzz_target;
use stiffnet::nn::{parse_network, write_network};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(net) = parse_network(text) {
        let again = parse_network(&write_network(&net)).expect("written networks parse");
        assert_eq!(again.dims(), net.dims());
    }
});
