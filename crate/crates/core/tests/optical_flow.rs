use flvae::data::{gen_dataset, SynthConfig, VideoClip};
use flvae::flow::{flow_clip, tv_l1, tv_l1_traced, TvL1Params};
use flvae::Tensor;

mod common;
use common::{mean_epe, pattern};

#[test]
fn identical_frames_give_zero_flow() {
    let a = pattern(48, 48, 0.0, 0.0);
    let f = tv_l1(&a, &a, &TvL1Params::default()).unwrap();
    assert!(f.mean_magnitude() < 1e-3, "{}", f.mean_magnitude());
}

#[test]
fn one_pixel_translation() {
    let a = pattern(48, 48, 0.0, 0.0);
    let b = pattern(48, 48, 1.0, 0.0);
    let f = tv_l1(&a, &b, &TvL1Params::default()).unwrap();
    let epe = mean_epe(&f, (1.0, 0.0), 4);
    println!("1px EPE {epe}");
    assert!(epe < 0.5, "{epe}");
}

#[test]
fn diagonal_two_pixel_shift_angular_error() {
    let a = pattern(48, 48, 0.0, 0.0);
    let b = pattern(48, 48, 2.0, 2.0);
    let f = tv_l1(&a, &b, &TvL1Params::default()).unwrap();
    // angular error in the space-time sense, over the interior
    let mut s = 0.0;
    let mut n = 0;
    for y in 6..42 {
        for x in 6..42 {
            let (u, v) = (f.u.at(&[y, x]), f.v.at(&[y, x]));
            let num = u * 2.0 + v * 2.0 + 1.0;
            let den = (u * u + v * v + 1.0).sqrt() * 9f64.sqrt();
            s += (num / den).clamp(-1.0, 1.0).acos().to_degrees();
            n += 1;
        }
    }
    let ae = s / n as f64;
    println!("diag AE {ae}");
    assert!(ae < 15.0, "{ae}");
}

#[test]
fn energy_non_increasing_across_warps() {
    let a = pattern(48, 48, 0.0, 0.0);
    let b = pattern(48, 48, 1.5, -0.5);
    let out = tv_l1_traced(&a, &b, &TvL1Params::default()).unwrap();
    let e = &out.finest_energies;
    println!("{e:?}");
    assert!(e.len() >= 2 && e.len() <= TvL1Params::default().warps + 1);
    assert!(e.last().unwrap() < &e[0]);
    for w in e.windows(2) {
        assert!(w[1] <= w[0] + 1e-8, "{e:?}");
    }
}

#[test]
fn resolution_covariance() {
    let a = pattern(48, 48, 0.0, 0.0);
    let b = pattern(48, 48, 1.0, 0.5);
    let full = tv_l1(&a, &b, &TvL1Params::default()).unwrap();
    // 2x box downscale
    let down = |t: &Tensor| {
        Tensor::from_fn([24, 24], |i| {
            let (y, x) = (2 * (i / 24), 2 * (i % 24));
            (t.at(&[y, x]) + t.at(&[y, x + 1]) + t.at(&[y + 1, x]) + t.at(&[y + 1, x + 1])) / 4.0
        })
    };
    let half = tv_l1(&down(&a), &down(&b), &TvL1Params::default()).unwrap();
    let mut s = 0.0;
    for y in 0..48 {
        for x in 0..48 {
            let (hu, hv) = (2.0 * half.u.at(&[y / 2, x / 2]), 2.0 * half.v.at(&[y / 2, x / 2]));
            s += (hu - full.u.at(&[y, x])).hypot(hv - full.v.at(&[y, x]));
        }
    }
    let mean = s / (48.0 * 48.0);
    println!("covariance EPE {mean}");
    assert!(mean < 1.0, "{mean}");
}

fn translating_clip(frames: usize, v: (f64, f64)) -> VideoClip {
    let mut data = Vec::new();
    for t in 0..frames {
        let g = pattern(32, 32, v.0 * t as f64, v.1 * t as f64);
        for &p in g.data() {
            data.extend_from_slice(&[p, p, p]);
        }
    }
    VideoClip::new("tr", Tensor::new([frames, 32, 32, 3], data).unwrap(), None).unwrap()
}

#[test]
fn flow_clip_counts_and_static_clip() {
    let still = translating_clip(3, (0.0, 0.0));
    let f = flow_clip(still.frames(), &TvL1Params::default()).unwrap();
    assert_eq!(f.shape(), &[2, 32, 32, 2]);
    assert!(f.max_abs() < 1e-3);
}

#[test]
fn translating_clip_gives_near_constant_flow() {
    let c = translating_clip(4, (1.0, 0.0));
    let f = flow_clip(c.frames(), &TvL1Params::default()).unwrap();
    for t in 0..3 {
        let slab = f.narrow0(t, 1).unwrap();
        let (mut su, mut n) = (0.0, 0);
        for y in 4..28 {
            for x in 4..28 {
                su += slab.at(&[0, y, x, 0]);
                n += 1;
            }
        }
        let mu = su / n as f64;
        assert!((mu - 1.0).abs() < 0.25, "frame {t}: mean u {mu}");
    }
}

#[test]
fn synthetic_dataset_flow_follows_blob() {
    let cfg = SynthConfig { clips_per_class: 1, noise_std: 0.0, ..Default::default() };
    let clip = &gen_dataset(&cfg).unwrap()[0];
    let f = flow_clip(&clip.window(0, 3).unwrap().frames().clone(), &TvL1Params::default()).unwrap();
    // blob moves rightwards before the key frame: mean u over bright pixels is positive
    let frame = clip.frame(0);
    let mut su = 0.0;
    let mut n = 0;
    for y in 0..48 {
        for x in 0..48 {
            if frame.at(&[y, x, 0]) > 0.4 {
                su += f.at(&[0, y, x, 0]);
                n += 1;
            }
        }
    }
    assert!(n > 0 && su / n as f64 > 0.5, "{}", su / n as f64);
}
