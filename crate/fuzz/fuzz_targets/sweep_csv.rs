#![no_main]

use libfuzzer_sys::fuzz_target;
use sloppy_cli::records::SweepTable;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(table) = SweepTable::from_csv(text) {
        let emitted = table.to_csv_string().expect("parsed table emits");
        let again = SweepTable::from_csv(&emitted).expect("emitted csv parses");
        assert_eq!(table, again);
    }
});
