#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    wordbag_fuzz::dataset_jsonl(data);
});
