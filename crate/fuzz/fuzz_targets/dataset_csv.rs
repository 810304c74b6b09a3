#![no_main]

use libfuzzer_sys::fuzz_target;

// Arbitrary bytes must never panic the CSV reader; errors are fine.
fuzz_target!(|data: &[u8]| {
    let _ = pcselect::io::read_dataset_csv(data, "y");
});
