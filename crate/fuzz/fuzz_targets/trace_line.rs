#![no_main]

use libfuzzer_sys::fuzz_target;
use planar_push::harness::{parse_trace_line, trace_jsonl};

fuzz_target!(|data: &[u8]| {
    let Ok(line) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(sample) = parse_trace_line(line) else {
        return;
    };
    let printed = trace_jsonl(std::slice::from_ref(&sample));
    let again = parse_trace_line(printed.trim_end()).expect("printed sample parses");
    assert_eq!(again, sample);
});
