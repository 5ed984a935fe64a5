use dspgan::autodiff::{Graph, Tensor};
use dspgan::dsp::{ltv_filter, split_features, DspConfig, ImpulseResponseFrames, NNFilterNets};
use dspgan::excitation::PitchContour;
use dspgan::gan::build_supervision;
use dspgan::signal::{load_wav, write_wav, Codec, FrameParams, MelAnalyzer, Waveform, MEL_FLOOR};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn noise(seed: u64, n: usize, amp: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-amp..amp)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mel_frame_count_and_floor(len in 1024usize..9000, seed in 0u64..1000, quiet in any::<bool>()) {
        let amp = if quiet { 1e-9 } else { 0.8 };
        let w = Waveform::new(noise(seed, len, amp), 24000);
        let params = FrameParams::default();
        let mel = MelAnalyzer::new(&params).unwrap().log_mel(&w).unwrap();
        prop_assert_eq!(mel.frames(), len / params.hop + 1);
        prop_assert_eq!(mel.n_mels, 80);
        let floor = MEL_FLOOR.ln();
        prop_assert!(mel.values.iter().all(|&v| v.is_finite() && v >= floor));
    }

    #[test]
    fn ltv_is_linear_in_the_source(
        frames in 1usize..12,
        hop in 1usize..40,
        ir_len in 1usize..24,
        seed in 0u64..1000,
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
    ) {
        let n = frames * hop;
        let irs = ImpulseResponseFrames::new(ir_len, noise(seed, frames * ir_len, 1.0)).unwrap();
        let x1 = noise(seed + 1, n, 1.0);
        let x2 = noise(seed + 2, n, 1.0);
        let mix: Vec<f64> = x1.iter().zip(&x2).map(|(u, v)| a * u + b * v).collect();
        let y = ltv_filter(&mix, &irs, hop).unwrap();
        let y1 = ltv_filter(&x1, &irs, hop).unwrap();
        let y2 = ltv_filter(&x2, &irs, hop).unwrap();
        prop_assert_eq!(y.len(), n);
        for i in 0..n {
            prop_assert!((y[i] - (a * y1[i] + b * y2[i])).abs() < 1e-9);
        }
    }

    #[test]
    fn split_reassembles_exactly(
        h in prop::collection::vec(-1e6f64..1e6, 1..40),
        seed in 0u64..1000,
    ) {
        let n = h.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let mut g = Graph::inference();
        let hv = g.constant(Tensor::new(&[1, 1, n], h.clone()).unwrap());
        let wv = g.constant(Tensor::new(&[1, 1, n], w).unwrap());
        let (sp, ap) = split_features(&mut g, hv, wv).unwrap();
        for i in 0..n {
            prop_assert_eq!(g.value(sp).data()[i] + g.value(ap).data()[i], h[i]);
        }
    }
}

#[test]
fn weight_predictor_output_is_open_unit_interval_and_frame_aligned() {
    let config = DspConfig {
        hidden: 16,
        ..DspConfig::default()
    };
    let nets = NNFilterNets::new(config.clone(), 5).unwrap();
    let frames = 9;
    let mut g = Graph::inference();
    let mel = g.constant(
        Tensor::new(
            &[1, config.n_mels, frames],
            noise(6, config.n_mels * frames, 6.0),
        )
        .unwrap(),
    );
    let out = nets.filters(&mut g, &nets.store, mel).unwrap();
    assert!(g
        .value(out.weights)
        .data()
        .iter()
        .all(|&w| w > 0.0 && w < 1.0));
    for v in [out.hidden, out.weights, out.periodic, out.aperiodic] {
        assert_eq!(g.shape(v)[2], frames);
    }
    for v in [out.ir_periodic, out.ir_aperiodic] {
        assert_eq!(g.shape(v)[1], frames);
        assert!(g.value(v).is_finite());
    }
}

#[test]
fn supervision_mel_and_sine_are_aligned() {
    let nets = NNFilterNets::new(
        DspConfig {
            hidden: 8,
            ..DspConfig::default()
        },
        1,
    )
    .unwrap();
    let w = Waveform::new(noise(2, 24000, 0.3), 24000);
    let mel = MelAnalyzer::new(&FrameParams::default())
        .unwrap()
        .log_mel(&w)
        .unwrap();
    let mut f0 = vec![140.0; mel.frames()];
    f0[10..20].iter_mut().for_each(|v| *v = 0.0);
    let contour = PitchContour::new(f0, 256).unwrap();
    for substitute in [true, false] {
        let b = build_supervision(&mel, &contour, &nets, substitute, 3).unwrap();
        assert_eq!(b.mel_dsp.frames() * 256, b.p1.len());
        assert_eq!(b.mel_dsp.frames(), mel.frames());
    }
}

#[test]
fn wav_write_clips_and_reload_stays_in_range() {
    let dir = tempfile::tempdir().unwrap();
    let mut x = noise(3, 4000, 0.9);
    x[7] = 1.7;
    x[8] = -2.5;
    for codec in [Codec::Pcm16, Codec::Float32] {
        let path = dir.path().join("x.wav");
        let report = write_wav(&Waveform::new(x.clone(), 24000), &path, codec).unwrap();
        assert_eq!(report.clipped, 2);
        let back = load_wav(&path).unwrap();
        assert_eq!(back.sample_rate, 24000);
        assert_eq!(back.len(), x.len());
        assert!(back.samples.iter().all(|v| v.abs() <= 1.0));
        let tol = if codec == Codec::Float32 {
            1e-7
        } else {
            1.0 / 32767.0
        };
        assert!((back.samples[3] - x[3]).abs() <= tol);
    }
}
