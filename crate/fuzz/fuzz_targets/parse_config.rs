#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(config) = stiffnet_cli::parse_config(text) {
        let echo = serde_json::to_string(&config).expect("configs serialize");
        assert_eq!(stiffnet_cli::parse_config(&echo).expect("echoed configs parse"), config);
    }
});
