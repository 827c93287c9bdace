use addmimo::detectors::{detect_mmse, detect_mmse_sic, detect_ml_bruteforce, MlConfig};
use addmimo::model::snr_to_sigma0;
use addmimo::sim::{run_ber_sweep, DetectorSpec, FrameRunner, StoppingRule, SweepConfig};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

fn stream(seed: u64, path: [u32; 3]) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(b"addmimo/substream/v1");
    h.update(seed.to_le_bytes());
    h.update(3u64.to_le_bytes());
    for p in path {
        h.update(p.to_le_bytes());
    }
    ChaCha8Rng::from_seed(h.finalize().into())
}

/// Straight-line MMSE sweep: explicit inverse, per-frame stopping check.
fn naive_mmse_sweep(seed: u64, n: usize, k: usize, m: usize, snr_db: &[f64], rule: StoppingRule) -> Vec<(u64, u64, u64)> {
    let levels = (m as f64).sqrt() as usize;
    let points: Vec<f64> = (0..levels).map(|i| (2 * i) as f64 - (levels - 1) as f64).collect();
    let es = (m as f64 - 1.0) / 3.0;
    let bits_per_symbol = levels.trailing_zeros() as u64;
    let gray = |i: usize| i ^ (i >> 1);

    let mut out = Vec::new();
    for (p, &snr) in snr_db.iter().enumerate() {
        let sigma0 = (k as f64 * es / 10f64.powf(snr / 10.0)).sqrt();
        let (mut frames, mut bits, mut errors) = (0u64, 0u64, 0u64);
        while frames < rule.max_frames && !(bits >= rule.min_bits && errors >= rule.min_errors) {
            let mut rng = stream(seed, [p as u32, frames as u32, 0]);
            let mut h = DMatrix::zeros(n, k);
            for j in 0..k {
                for i in 0..n {
                    h[(i, j)] = rng.sample::<f64, _>(StandardNormal);
                }
            }
            let sent: Vec<usize> = (0..k).map(|_| rng.random_range(0..levels)).collect();
            let x = DVector::from_iterator(k, sent.iter().map(|&i| points[i]));
            let mut y = &h * &x;
            for v in y.iter_mut() {
                *v += sigma0 * rng.sample::<f64, _>(StandardNormal);
            }
            let a = h.transpose() * &h + DMatrix::identity(k, k) * (sigma0 * sigma0 / es);
            let soft = a.try_inverse().unwrap() * h.transpose() * y;
            for (j, &s) in sent.iter().enumerate() {
                let d = (0..levels)
                    .min_by(|&a, &b| (points[a] - soft[j]).abs().total_cmp(&(points[b] - soft[j]).abs()))
                    .unwrap();
                errors += (gray(s) ^ gray(d)).count_ones() as u64;
            }
            frames += 1;
            bits += k as u64 * bits_per_symbol;
        }
        out.push((frames, bits, errors));
    }
    out
}

#[test]
fn mmse_sweep_matches_a_naive_reimplementation() {
    for (n, k, m, snr) in [(8, 8, 4, vec![0.0, 6.0, 12.0]), (12, 6, 16, vec![10.0, 20.0])] {
        let rule = StoppingRule {
            min_bits: 3_000,
            min_errors: 40,
            max_frames: 700,
        };
        let cfg = SweepConfig {
            n,
            k,
            m,
            snr_db: snr.clone(),
            detectors: vec![DetectorSpec::mmse()],
            stopping: rule.clone(),
            master_seed: 4242,
            threads: 2,
        };
        let report = run_ber_sweep(&cfg).unwrap();
        let oracle = naive_mmse_sweep(4242, n, k, m, &snr, rule);
        for (p, (frames, bits, errors)) in report.points.iter().zip(oracle) {
            assert_eq!((p.frames, p.bits, p.errors), (frames, bits, errors), "{n}x{k} {m}-QAM {} dB", p.snr_db);
            assert_eq!(p.ber, errors as f64 / bits as f64);
        }
    }
}

#[test]
fn sigma0_follows_the_per_antenna_snr_definition() {
    assert!((snr_to_sigma0(10.0, 16, 1.0).unwrap() - 1.6f64.sqrt()).abs() < 1e-15);
    assert!((snr_to_sigma0(0.0, 4, 5.0).unwrap() - 20f64.sqrt()).abs() < 1e-14);
    assert_eq!(snr_to_sigma0(f64::INFINITY, 8, 1.0).unwrap(), 0.0);
}

fn runner(detectors: Vec<DetectorSpec>, n: usize, k: usize, snr: f64) -> FrameRunner {
    FrameRunner::new(&SweepConfig {
        n,
        k,
        m: 4,
        snr_db: vec![snr],
        detectors,
        stopping: StoppingRule {
            min_bits: 1,
            min_errors: 1,
            max_frames: 1,
        },
        master_seed: 99,
        threads: 1,
    })
    .unwrap()
}

#[test]
fn ml_residual_lower_bounds_every_detector() {
    let r = runner(
        vec![
            DetectorSpec::ml(None),
            DetectorSpec::mmse(),
            DetectorSpec::mmse_sic(),
            DetectorSpec::add(4),
            DetectorSpec::als(4, 3),
        ],
        6,
        6,
        8.0,
    );
    for f in 0..60 {
        let (ch, tx) = r.frame(0, f).unwrap();
        let ml = r.detect(0, 0, f, &ch, &tx).unwrap();
        for det in 1..5 {
            let d = r.detect(det, 0, f, &ch, &tx).unwrap();
            assert!(ml.residual <= d.residual, "frame {f}, {}", r.labels()[det]);
        }
    }
}

#[test]
fn more_trajectories_never_raise_the_residual() {
    let r = runner(
        vec![DetectorSpec::add(5), DetectorSpec::add(20), DetectorSpec::als(2, 3), DetectorSpec::als(6, 3)],
        12,
        12,
        10.0,
    );
    for f in 0..40 {
        let (ch, tx) = r.frame(0, f).unwrap();
        let d: Vec<_> = (0..4).map(|i| r.detect(i, 0, f, &ch, &tx).unwrap()).collect();
        assert!(d[1].residual <= d[0].residual, "ADD frame {f}");
        assert!(d[3].residual <= d[2].residual, "ALS frame {f}");
    }
}

#[test]
fn runner_frames_match_direct_detector_calls() {
    let r = runner(vec![DetectorSpec::mmse(), DetectorSpec::mmse_sic(), DetectorSpec::ml(None)], 5, 4, 7.0);
    let c = r.constellation().clone();
    let es = c.symbol_energy();
    for f in 0..20 {
        let (ch, tx) = r.frame(0, f).unwrap();
        let h = ch.matrix();
        assert_eq!(tx.sigma0, r.sigma0(0));
        assert_eq!(r.detect(0, 0, f, &ch, &tx).unwrap(), detect_mmse(h, &tx.y, tx.sigma0, es, &c).unwrap());
        assert_eq!(r.detect(1, 0, f, &ch, &tx).unwrap(), detect_mmse_sic(h, &tx.y, tx.sigma0, es, &c).unwrap());
        assert_eq!(
            r.detect(2, 0, f, &ch, &tx).unwrap(),
            detect_ml_bruteforce(h, &tx.y, &c, &MlConfig::default()).unwrap()
        );
    }
}

#[test]
fn ml_beats_mmse_on_average() {
    let cfg = SweepConfig {
        n: 6,
        k: 6,
        m: 4,
        snr_db: vec![8.0, 12.0],
        detectors: vec![DetectorSpec::mmse(), DetectorSpec::ml(None)],
        stopping: StoppingRule {
            min_bits: 20_000,
            min_errors: 200,
            max_frames: 5_000,
        },
        master_seed: 5,
        threads: 0,
    };
    let r = run_ber_sweep(&cfg).unwrap();
    for snr in [8.0, 12.0] {
        let mmse = r.point("MMSE", snr).unwrap();
        let ml = r.point("ML", snr).unwrap();
        assert!(ml.ber < mmse.ber, "{snr} dB: ML {} vs MMSE {}", ml.ber, mmse.ber);
    }
}
