use std::f64::consts::TAU;

use proptest::prelude::*;

use super::*;
use crate::rng::Stream;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn random_vec(n: usize, seed: u64) -> Vec<Complex64> {
    (0..n).map(|i| { let s = Stream::new(seed, i as u64, 0, 0); c(s.normal(0), s.normal(1)) }).collect()
}

fn ones(n: usize) -> Vec<Complex64> {
    vec![c(1.0, 0.0); n]
}

#[test]
fn zero_image_encodes_to_zero() {
    let e = Encoding::new([4, 6, 2, 3], random_vec(48, 1), vec![true; 72]).unwrap();
    assert!(e.encode(&vec![c(0.0, 0.0); 72]).unwrap().iter().all(|v| v.norm() == 0.0));
}

#[test]
fn single_coil_full_sampling_is_unitary() {
    let e = Encoding::new([8, 6, 1, 1], ones(48), vec![true; 48]).unwrap();
    let x = random_vec(48, 2);
    let k = e.encode(&x).unwrap();
    assert!((norm(&k) - norm(&x)).abs() < 1e-12 * norm(&x));
    let back = e.adjoint(&k).unwrap();
    assert!(nrmse(&back, &x) < 1e-12);
    let mut delta = vec![c(0.0, 0.0); 48];
    delta[0] = c(1.0, 0.0);
    for v in e.encode(&delta).unwrap() {
        assert!((v - c(1.0 / 48f64.sqrt(), 0.0)).norm() < 1e-15);
    }
}

#[test]
fn matches_explicit_dft_matrix() {
    let (ny, nz, nc, ne) = (8, 8, 2, 2);
    let coils = random_vec(ny * nz * nc, 3);
    let mask: Vec<bool> = (0..ny * nz * ne).map(|i| Stream::new(4, i as u64, 0, 0).uniform(0) < 0.5).collect();
    let e = Encoding::new([ny, nz, nc, ne], coils.clone(), mask.clone()).unwrap();
    let x = random_vec(ny * nz * ne, 5);
    let n = (ny * nz) as f64;
    // brute force E x
    let mut ex = vec![c(0.0, 0.0); ny * nz * nc * ne];
    for ky in 0..ny {
        for kz in 0..nz {
            for cc in 0..nc {
                for ee in 0..ne {
                    if !mask[(ky * nz + kz) * ne + ee] {
                        continue;
                    }
                    let mut acc = c(0.0, 0.0);
                    for y in 0..ny {
                        for z in 0..nz {
                            let ph = -TAU * ((ky * y) as f64 / ny as f64 + (kz * z) as f64 / nz as f64);
                            acc += coils[(y * nz + z) * nc + cc] * x[(y * nz + z) * ne + ee] * Complex64::from_polar(1.0, ph);
                        }
                    }
                    ex[((ky * nz + kz) * nc + cc) * ne + ee] = acc / n.sqrt();
                }
            }
        }
    }
    let got = e.encode(&x).unwrap();
    assert!(nrmse(&got, &ex) < 1e-12);
    // brute force E^H (E x)
    let mut ehex = vec![c(0.0, 0.0); ny * nz * ne];
    for y in 0..ny {
        for z in 0..nz {
            for ee in 0..ne {
                let mut acc = c(0.0, 0.0);
                for ky in 0..ny {
                    for kz in 0..nz {
                        let ph = TAU * ((ky * y) as f64 / ny as f64 + (kz * z) as f64 / nz as f64);
                        for cc in 0..nc {
                            acc += coils[(y * nz + z) * nc + cc].conj() * ex[((ky * nz + kz) * nc + cc) * ne + ee] * Complex64::from_polar(1.0, ph);
                        }
                    }
                }
                ehex[(y * nz + z) * ne + ee] = acc / n.sqrt();
            }
        }
    }
    assert!(nrmse(&e.normal(&x, 0.0).unwrap(), &ehex) < 1e-12);
}

#[test]
fn normal_operator_is_identity_for_full_single_coil() {
    let e = Encoding::new([5, 7, 1, 2], ones(35), vec![true; 70]).unwrap();
    let x = random_vec(70, 6);
    assert!(nrmse(&e.normal(&x, 0.0).unwrap(), &x) < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn adjoint_identity(seed in 0u64..1000, ny in 2usize..9, nz in 2usize..9, nc in 1usize..4, ne in 1usize..3, p in 0.2f64..1.0) {
        let mut mask: Vec<bool> = (0..ny * nz * ne).map(|i| Stream::new(seed, i as u64, 1, 0).uniform(0) < p).collect();
        for e in 0..ne { mask[e] = true; }
        let enc = Encoding::new([ny, nz, nc, ne], random_vec(ny * nz * nc, seed + 1), mask).unwrap();
        let x = random_vec(enc.image_len(), seed + 2);
        let y = random_vec(enc.kspace_len(), seed + 3);
        let lhs = dot(&enc.encode(&x).unwrap(), &y);
        let rhs = dot(&x, &enc.adjoint(&y).unwrap());
        prop_assert!((lhs - rhs).norm() <= 1e-12 * lhs.norm().max(1e-300));
        // linearity
        let x2 = random_vec(enc.image_len(), seed + 4);
        let (a, b) = (c(0.7, -1.3), c(-2.0, 0.4));
        let comb: Vec<Complex64> = x.iter().zip(&x2).map(|(u, v)| a * u + b * v).collect();
        let lin: Vec<Complex64> = enc.encode(&x).unwrap().iter().zip(enc.encode(&x2).unwrap()).map(|(u, v)| a * u + b * v).collect();
        prop_assert!(nrmse(&enc.encode(&comb).unwrap(), &lin) < 1e-12);
    }
}

#[test]
fn caipi_patterns() {
    assert!(caipi_mask(4, 6, 1, 3, 2, 2).unwrap().iter().all(|&m| m));
    let m = caipi_mask(4, 6, 2, 0, 0, 3).unwrap();
    for y in 0..4 {
        for z in 0..6 {
            for e in 0..3 {
                assert_eq!(m[(y * 6 + z) * 3 + e], z % 2 == 0);
            }
        }
    }
    let (ny, nz, ne) = (5, 36, 3);
    let m = caipi_mask(ny, nz, 9, 3, 2, ne).unwrap();
    let pattern = |e: usize| (0..ny * nz).map(|p| m[p * ne + e]).collect::<Vec<_>>();
    assert_ne!(pattern(0), pattern(1));
    assert_ne!(pattern(1), pattern(2));
    for y in 0..ny {
        for e in 0..ne {
            assert_eq!((0..nz).filter(|&z| m[(y * nz + z) * ne + e]).count(), 4);
        }
    }
    assert!(caipi_mask(4, 4, 0, 0, 0, 1).is_err());
}

fn phantom_problem(noise: f64) -> (ReconProblem, PhantomImage) {
    let (ny, nz, nc) = (32, 32, 8);
    let te = [0.005, 0.015];
    let ph = phantom(ny, nz, &te);
    let coils = coil_maps(ny, nz, nc);
    let mask = caipi_mask(ny, nz, 3, 1, 1, te.len()).unwrap();
    let dims = [ny, nz, nc, te.len()];
    let enc = Encoding::new(dims, coils.clone(), mask.clone()).unwrap();
    let mut k = enc.encode(&ph.image).unwrap();
    if noise > 0.0 {
        add_kspace_noise(&mut k, &mask, dims, noise, 77);
    }
    (ReconProblem::new(dims, k, coils, mask).unwrap(), ph)
}

#[test]
fn coil_maps_are_normalized() {
    let m = coil_maps(6, 5, 4);
    for p in 0..30 {
        let s: f64 = (0..4).map(|c| m[p * 4 + c].norm_sqr()).sum();
        assert!((s - 1.0).abs() < 1e-12);
    }
}

#[test]
fn lsqr_inverts_full_sampling() {
    let dims = [6, 8, 1, 1];
    let x = random_vec(48, 9);
    let e = Encoding::new(dims, ones(48), vec![true; 48]).unwrap();
    let k = e.encode(&x).unwrap();
    let p = ReconProblem::new(dims, k, ones(48), vec![true; 48]).unwrap();
    let r = recon_lsqr(&p, 0.0, 1e-14).unwrap();
    assert!(nrmse(&r.image, &x) < 1e-12);
    let big = recon_lsqr(&p, 1e12, 1e-14).unwrap();
    assert!(norm(&big.image) < 1e-9 * norm(&x));
}

#[test]
fn lsqr_beats_zero_filling() {
    let (p, ph) = phantom_problem(0.0);
    let r = recon_lsqr(&p, 0.0, 1e-10).unwrap();
    let zf = nrmse(&p.zero_filled(), &ph.image);
    let ls = nrmse(&r.image, &ph.image);
    assert!(ls < zf, "{ls} vs {zf}");
    assert!(ls < 1e-4, "{ls}");
}

#[test]
fn gradient_recon_matches_lsqr() {
    let (p, _) = phantom_problem(0.0);
    let ls = recon_lsqr(&p, 0.0, 1e-10).unwrap();
    let gd = recon_gd(&p, &ReconOptions::default()).unwrap();
    let d = nrmse(&gd.image, &ls.image);
    assert!(d < 0.01, "nrmse {d}");
}

#[test]
fn tv_lowers_image_tv_and_background_noise() {
    let (p, ph) = phantom_problem(0.01);
    let plain = recon_gd(&p, &ReconOptions::default()).unwrap();
    let tv = recon_gd(&p, &ReconOptions { lambda_tv: 0.002, ..Default::default() }).unwrap();
    assert!(image_tv(&p, &tv.image).unwrap() < image_tv(&p, &plain.image).unwrap());
    let ne = 2;
    let bg_std = |img: &[Complex64]| {
        let v: Vec<f64> = (0..32 * 32).filter(|&q| !ph.support[q]).flat_map(|q| (0..ne).map(move |e| q * ne + e)).map(|i| img[i].norm()).collect();
        let m = v.iter().sum::<f64>() / v.len() as f64;
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
    };
    assert!(bg_std(&tv.image) < bg_std(&plain.image), "{} vs {}", bg_std(&tv.image), bg_std(&plain.image));
    let region = |img: &[Complex64]| {
        let idx: Vec<usize> = (0..32 * 32).filter(|&q| ph.support[q]).flat_map(|q| (0..ne).map(move |e| q * ne + e)).collect();
        let a: Vec<Complex64> = idx.iter().map(|&i| img[i]).collect();
        let b: Vec<Complex64> = idx.iter().map(|&i| ph.image[i]).collect();
        nrmse(&a, &b)
    };
    assert!(region(&tv.image) <= 2.0 * region(&plain.image));
}
