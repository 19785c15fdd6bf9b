use proptest::prelude::*;
use pulse_core::augment::{rotate_frames, strong_augment, weak_augment};
use pulse_core::autodiff::Tape;
use pulse_core::curriculum::{k_for, select_top_k, CurriculumSchedule, PseudoLabelRecord};
use pulse_core::model::{Clip, ClipDims};
use pulse_core::rng::{substream, Stream};
use pulse_core::signal::{hr_class_of, ipr, pearson, psd_probe, snr, BandConfig, BvpSignal, HrClass, DEFAULT_IPR_STEP};

const FPS: f64 = 30.0;

fn signal() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, 32..200).prop_filter("non-constant", |v| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().any(|x| (x - m).abs() > 1e-6)
    })
}

fn psd(x: &[f64]) -> Vec<f64> {
    psd_probe(&BvpSignal::new(x.to_vec(), FPS).unwrap(), &BandConfig::default())
        .unwrap()
        .power
}

fn max_dev(a: &[f64], b: &[f64]) -> f64 {
    let scale = a.iter().cloned().fold(0.0, f64::max).max(1e-300);
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / scale).fold(0.0, f64::max)
}

fn small_clip(frames: usize, seed: u64) -> Clip {
    use rand::Rng;
    let dims = ClipDims {
        frames,
        width: 2,
        height: 2,
        channels: 3,
    };
    let mut rng = substream(seed, Stream::Test);
    let data = (0..dims.numel()).map(|_| rng.random::<f64>()).collect();
    Clip::new("p", dims, FPS, data).unwrap()
}

proptest! {
    #[test]
    fn psd_reversal_invariant(x in signal()) {
        let mut r = x.clone();
        r.reverse();
        prop_assert!(max_dev(&psd(&x), &psd(&r)) <= 1e-9);
    }

    // Circular shifts only preserve power at DFT bin frequencies. With 300
    // frames at 30 fps those are the classes whose BPM is a multiple of 6.
    #[test]
    fn psd_shift_invariant_at_dft_bins(
        x in prop::collection::vec(-10.0f64..10.0, 300),
        shift in 0usize..300,
    ) {
        let mut y = x.clone();
        y.rotate_left(shift);
        let (a, b) = (psd(&x), psd(&y));
        let bins: Vec<usize> = (0..141).filter(|c| (40 + c) % 6 == 0).collect();
        let pick = |p: &[f64]| bins.iter().map(|&c| p[c]).collect::<Vec<_>>();
        prop_assert!(max_dev(&pick(&a), &pick(&b)) <= 1e-9);
    }

    #[test]
    fn psd_scales_quadratically(x in signal(), k in 0.01f64..100.0) {
        let scaled: Vec<f64> = x.iter().map(|v| k * v).collect();
        let a = psd(&x);
        let b = psd(&scaled);
        let want: Vec<f64> = a.iter().map(|p| p * k * k).collect();
        prop_assert!(max_dev(&want, &b) <= 1e-9);
        let band = BandConfig::default();
        let sx = BvpSignal::new(x.clone(), FPS).unwrap();
        let ss = BvpSignal::new(scaled, FPS).unwrap();
        prop_assert_eq!(hr_class_of(&sx, &band).unwrap(), hr_class_of(&ss, &band).unwrap());
    }

    #[test]
    fn hr_class_ignores_offset(x in signal(), c in -100.0f64..100.0) {
        let band = BandConfig::default();
        let shifted: Vec<f64> = x.iter().map(|v| v + c).collect();
        let a = psd(&x);
        let b = psd(&shifted);
        prop_assert!(max_dev(&a, &b) <= 1e-9);
        let ha = hr_class_of(&BvpSignal::new(x, FPS).unwrap(), &band).unwrap();
        let hb = hr_class_of(&BvpSignal::new(shifted, FPS).unwrap(), &band).unwrap();
        // exact ties can flip under rounding; compare peak power instead
        prop_assert!((a[ha.class_index] - a[hb.class_index]).abs() <= 1e-9 * a[ha.class_index]);
    }

    #[test]
    fn snr_and_ipr_are_fractions(x in signal()) {
        let band = BandConfig::default();
        let s = BvpSignal::new(x, FPS).unwrap();
        let v = snr(&psd_probe(&s, &band).unwrap(), &band).unwrap();
        prop_assert!(v > 0.0 && v <= 1.0);
        let i = ipr(&s, &band, DEFAULT_IPR_STEP).unwrap();
        prop_assert!((0.0..=1.0).contains(&i));
    }

    #[test]
    fn pearson_symmetric_and_affine_invariant(
        pair in (32usize..120).prop_flat_map(|n| (
            prop::collection::vec(-5.0f64..5.0, n),
            prop::collection::vec(-5.0f64..5.0, n),
        )),
        k in 0.1f64..10.0,
        c in -10.0f64..10.0,
    ) {
        let (a, b) = pair;
        let Ok(r) = pearson(&a, &b) else { return Ok(()); };
        prop_assert!((-1.0..=1.0).contains(&r));
        prop_assert!((r - pearson(&b, &a).unwrap()).abs() <= 1e-12);
        let t: Vec<f64> = a.iter().map(|v| k * v + c).collect();
        prop_assert!((r - pearson(&t, &b).unwrap()).abs() <= 1e-9);
    }

    #[test]
    fn frame_shifts_form_a_group(frames in 2usize..40, a in 0usize..100, b in 0usize..100, seed in 0u64..1000) {
        let clip = small_clip(frames, seed);
        let two = rotate_frames(&rotate_frames(&clip, a), b);
        let sum = rotate_frames(&clip, a + b);
        prop_assert_eq!(two.data(), sum.data());
        let full = rotate_frames(&clip, frames);
        prop_assert_eq!(full.data(), clip.data());
        let back = rotate_frames(&rotate_frames(&clip, a), frames - a % frames);
        prop_assert_eq!(back.data(), clip.data());
        let twice = strong_augment(&strong_augment(&clip));
        prop_assert_eq!(twice.data(), clip.data());
    }

    #[test]
    fn weak_shift_in_range(frames in 2usize..40, shift_max in 1usize..60, seed in 0u64..1000) {
        let clip = small_clip(frames, seed);
        let mut rng = substream(seed, Stream::Augment);
        let (out, s) = weak_augment(&clip, shift_max, &mut rng);
        prop_assert!(s >= 1 && s <= shift_max.min(frames - 1));
        let want = rotate_frames(&clip, s);
        prop_assert_eq!(out.data(), want.data());
    }

    #[test]
    fn k_is_floor_of_ratio_times_n(ratio in 0.0f64..=1.0, n in 0usize..10_000) {
        let k = k_for(ratio, n);
        let exact = ratio * n as f64;
        prop_assert!(k as f64 <= exact + 1e-9);
        prop_assert!(k as f64 + 1.0 > exact);
    }

    #[test]
    fn schedules_stay_between_endpoints(e_total in 1usize..200, m in 0.0f64..0.5, n in 0.0f64..0.5) {
        let inc = CurriculumSchedule { m, n, ..CurriculumSchedule::increasing(e_total) };
        let dec = CurriculumSchedule { m, n, ..CurriculumSchedule::decreasing(e_total) };
        let mut prev = inc.ratio_at(0).unwrap();
        for e in 0..=e_total {
            let r = inc.ratio_at(e).unwrap();
            prop_assert!(r >= prev && r >= m - 1e-12 && r <= m + n + 1e-12);
            prev = r;
            let d = dec.ratio_at(e).unwrap();
            prop_assert!((d - (m + n - (r - m))).abs() <= 1e-12);
        }
    }

    #[test]
    fn top_k_matches_full_sort(
        values in prop::collection::vec((0u8..20, any::<bool>()), 0..60),
        k in 0usize..70,
    ) {
        let mut records: Vec<PseudoLabelRecord> = values
            .iter()
            .enumerate()
            .map(|(i, &(v, ok))| PseudoLabelRecord {
                clip_id: format!("c{:03}", (i * 37) % 101),
                predicted: BvpSignal::new(vec![0.0, 1.0], FPS).unwrap(),
                hr: ok.then_some(HrClass { class_index: 0, bpm: 40 }),
                snr: v as f64 / 20.0,
                criterion_value: v as f64 / 20.0,
                selected: false,
                epoch: 0,
            })
            .collect();
        let mut oracle: Vec<(f64, String, usize)> = records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.hr.is_some())
            .map(|(i, r)| (-r.criterion_value, r.clip_id.clone(), i))
            .collect();
        oracle.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let want: Vec<usize> = oracle.into_iter().take(k).map(|t| t.2).collect();
        let got = select_top_k(&mut records, k);
        prop_assert_eq!(&got, &want);
        prop_assert_eq!(records.iter().filter(|r| r.selected).count(), want.len());
    }

    #[test]
    fn backward_is_linear(
        x in prop::collection::vec(0.1f64..3.0, 2..12),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
    ) {
        let n = x.len();
        let grad = |wa: f64, wb: f64| {
            let mut t = Tape::new();
            let v = t.leaf(x.clone(), &[n]).unwrap();
            let sq = t.mul(v, v).unwrap();
            let f = t.sum(sq).unwrap();
            let th = t.tanh(v).unwrap();
            let lg = t.log(v).unwrap();
            let p = t.mul(th, lg).unwrap();
            let g = t.mean(p).unwrap();
            let fa = t.scale(f, wa).unwrap();
            let gb = t.scale(g, wb).unwrap();
            let out = t.add(fa, gb).unwrap();
            t.backward(out).unwrap().wrt(v)
        };
        let combined = grad(a, b);
        let gf = grad(1.0, 0.0);
        let gg = grad(0.0, 1.0);
        for i in 0..n {
            let want = a * gf[i] + b * gg[i];
            prop_assert!((combined[i] - want).abs() <= 1e-9 * want.abs().max(1.0));
        }
    }
}

// The class probes sit between DFT bins, where a circular shift changes the
// leakage pattern, so the full class PSD is not shift-invariant.
#[test]
#[ignore = "unattainable: class frequencies off the DFT grid are not shift-invariant"]
fn psd_shift_invariant_on_all_classes() {
    use rand::Rng;
    let mut rng = substream(21, Stream::Test);
    for _ in 0..50 {
        let x: Vec<f64> = (0..300).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut y = x.clone();
        y.rotate_left(rng.random_range(1..300));
        assert!(max_dev(&psd(&x), &psd(&y)) <= 1e-9);
    }
}
