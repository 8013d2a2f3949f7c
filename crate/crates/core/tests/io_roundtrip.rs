use proptest::prelude::*;
use tempfile::TempDir;

use repest::io::{
    read_flo, read_flow_dir, read_frames_dir, read_manifest, read_pgm, read_rimg, read_signal,
    write_flow_dir, write_frames_dir, write_manifest, write_pgm, write_rimg, write_signal,
};
use repest::types::CycleAnnotation;
use repest::{FlowField, Grid, Manifest, ManifestEntry, VideoSource};

#[test]
fn frames_dir_round_trip_at_8_bits() {
    let tmp = TempDir::new().unwrap();
    let frames: Vec<Grid> = (0..5)
        .map(|i| Grid::from_fn(9, 7, |x, y| ((x * 7 + y * 3 + i * 11) % 256) as f32 / 255.0))
        .collect();
    write_frames_dir(tmp.path(), &frames).unwrap();
    let back = read_frames_dir(tmp.path()).unwrap();
    assert_eq!(back, frames);
}

#[test]
fn flow_dir_keeps_order() {
    let tmp = TempDir::new().unwrap();
    let flows: Vec<FlowField> = (0..12)
        .map(|i| FlowField::from_fn(4, 3, |x, y| (i as f32, (x + y) as f32 * 0.25)))
        .collect();
    write_flow_dir(tmp.path(), &flows).unwrap();
    assert_eq!(read_flow_dir(tmp.path()).unwrap(), flows);
}

#[test]
fn manifest_round_trip() {
    let m = Manifest {
        videos: vec![
            ManifestEntry {
                id: "a".into(),
                source: VideoSource::Frames("clips/a".into()),
                fps: 25.0,
                annotation: CycleAnnotation::new("a", 25.0, 3, Some(vec![0, 10, 20, 30])).unwrap(),
            },
            ManifestEntry {
                id: "b".into(),
                source: VideoSource::Flow("flows/b".into()),
                fps: 30.0,
                annotation: CycleAnnotation::new("b", 30.0, 7, None).unwrap(),
            },
        ],
    };
    assert_eq!(read_manifest(&write_manifest(&m)).unwrap(), m);
}

#[test]
fn manifest_rejects_both_sources() {
    let text = r#"{"videos":[{"id":"x","frames_dir":"a","flow_dir":"b","fps":30,"count":2}]}"#;
    assert!(read_manifest(text).is_err());
}

#[test]
fn garbage_headers_are_errors_not_panics() {
    assert!(read_flo(b"PIEH garbage").is_err());
    let mut huge = 202021.25f32.to_le_bytes().to_vec();
    huge.extend_from_slice(&i32::MAX.to_le_bytes());
    huge.extend_from_slice(&i32::MAX.to_le_bytes());
    assert!(read_flo(&huge).is_err());
    assert!(read_pgm(b"P5 99999999999 99999999999 65535 ").is_err());
}

proptest! {
    #[test]
    fn rimg_is_bit_exact(w in 1usize..12, h in 1usize..12, seed in any::<u32>()) {
        let img = Grid::from_fn(w, h, |x, y| f32::from_bits(seed.rotate_left((x * 5 + y) as u32) & 0x7f7f_ffff));
        let back = read_rimg(&write_rimg(&img)).unwrap();
        prop_assert_eq!(
            back.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            img.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn pgm_16_bit_is_lossless_on_its_levels(w in 1usize..10, h in 1usize..10, k in 1u16..1000) {
        let img = Grid::from_fn(w, h, |x, y| ((x * 31 + y * 17) as u16 % (k + 1)) as f32 / k as f32);
        let back = read_pgm(&write_pgm(&img, k)).unwrap();
        for (a, b) in back.as_slice().iter().zip(img.as_slice()) {
            prop_assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn signal_text_round_trip(samples in prop::collection::vec(-1e6f64..1e6, 1..50)) {
        let back = read_signal(&write_signal(&samples, 30.0)).unwrap();
        prop_assert_eq!(back, samples);
    }
}
