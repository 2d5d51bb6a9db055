#![no_main]

use libfuzzer_sys::fuzz_target;
use sloppy_cli::records::SweepTable;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(table) = SweepTable::from_json(text) {
        let emitted = table.to_json_string().expect("parsed table emits");
        let again = SweepTable::from_json(&emitted).expect("emitted json parses");
        assert_eq!(table.records, again.records);
        assert_eq!(table.labels, again.labels);
    }
});
