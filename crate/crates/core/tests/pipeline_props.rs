use proptest::prelude::*;

use repest::pipeline::{combine_power, count_video, PipelineConfig, VideoInput};
use repest::synth::{gen_flow_sequence, SynthKind, SynthSpec, TaxonomyCase};
use repest::wavelet::dense_cwt;
use repest::{Grid, WaveletConfig};

fn count(flows: &[repest::FlowField], cfg: &PipelineConfig) -> f64 {
    count_video(VideoInput::Flows(flows), cfg).unwrap().count
}

fn spec(case: TaxonomyCase, size: usize, freq: f64, duration: f64) -> SynthSpec {
    let mut s = SynthSpec::new(SynthKind::Taxonomy(case));
    s.width = size;
    s.height = size;
    s.base_freq = freq;
    s.duration = duration;
    s
}

#[test]
fn temporal_reversal_keeps_count() {
    let seq =
        gen_flow_sequence::<f32>(&spec(TaxonomyCase::OscTranslationSide, 32, 0.8, 12.0)).unwrap();
    let cfg = PipelineConfig::for_fps(30.0);
    let forward = count(&seq.flows, &cfg);
    let reversed: Vec<_> = seq.flows.iter().rev().map(|f| f.scaled(-1.0)).collect();
    let backward = count(&reversed, &cfg);
    assert!(
        (forward - backward).abs() / forward < 0.05,
        "{forward} vs {backward}"
    );
}

#[test]
fn stride_two_and_four_agree() {
    let seq =
        gen_flow_sequence::<f32>(&spec(TaxonomyCase::OscExpansionFront, 96, 0.6, 12.0)).unwrap();
    let at = |stride| {
        let cfg = PipelineConfig {
            stride: Some(stride),
            sigma: 8.0 / stride as f64,
            ..PipelineConfig::for_fps(30.0)
        };
        count(&seq.flows, &cfg)
    };
    let (c2, c4) = (at(2), at(4));
    assert!((c2 - c4).abs() / c2 < 0.10, "stride 2 {c2}, stride 4 {c4}");
}

#[test]
fn intermittent_translation_counts_within_one() {
    let seq = gen_flow_sequence::<f32>(&spec(TaxonomyCase::IntermittentTranslation, 32, 0.5, 20.0))
        .unwrap();
    let c = count(&seq.flows, &PipelineConfig::for_fps(30.0));
    assert!(
        (c - seq.true_count).abs() <= 1.0,
        "count {c} vs {}",
        seq.true_count
    );
}

#[test]
fn static_video_counts_nothing() {
    let flows = vec![repest::FlowField::zeros(16, 16); 120];
    assert!(count(&flows, &PipelineConfig::for_fps(30.0)) < 1.0);
}

fn stack(seed: &[f32], t: usize) -> Vec<Grid<f32>> {
    (0..t)
        .map(|i| {
            Grid::from_fn(3, 3, |x, y| {
                let a = seed[(x + 3 * y) % seed.len()];
                (a * (i as f32 * 0.3 + x as f32).sin()) + 0.1 * (i * (y + 1)) as f32 % 1.7
            })
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn fused_power_is_the_channel_sum(seeds in prop::collection::vec(-2.0f32..2.0, 6)) {
        let cfg = WaveletConfig::for_fps(30.0);
        let results: Vec<_> = (0..6)
            .map(|c| {
                let s: Vec<f32> = seeds.iter().map(|v| v * (c as f32 + 1.0)).collect();
                dense_cwt(&stack(&s, 48), &cfg).unwrap()
            })
            .collect();
        let arr: [_; 6] = results.clone().try_into().unwrap();
        let fused = combine_power(&arr).unwrap();
        for t in 0..48 {
            for px in 0..9 {
                let mut manual = 0.0f32;
                for r in &results {
                    manual += r.power(t).as_slice()[px];
                }
                prop_assert_eq!(fused.power[t].as_slice()[px].to_bits(), manual.to_bits());
            }
        }
    }
}
