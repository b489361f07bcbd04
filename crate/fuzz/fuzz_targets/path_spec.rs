#![no_main]

use libfuzzer_sys::fuzz_target;
use planar_push::geometry::Vec2;
use planar_push::harness::PathConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(config) = toml::from_str::<PathConfig>(text) else {
        return;
    };
    let Ok(path) = config.path() else {
        return;
    };
    let length = path.length();
    assert!(length.is_finite() && length > 0.0);
    for k in 0..=8 {
        let s = length * k as f64 / 8.0;
        let p = path.point_at(s);
        assert!(p.x.is_finite() && p.y.is_finite());
        let proj = path.project(p + Vec2::new(0.3, -0.2));
        assert!(proj.lateral_offset.is_finite());
        assert!((path.project(p).lateral_offset).abs() <= 1e-6 * (1.0 + length));
    }
});
