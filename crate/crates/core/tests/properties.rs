use faer::Mat;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ttkoop::basis::{dense_transform, transform_exact, transform_streamed, BasisFunction};
use ttkoop::dynamics::{generate_abc_dataset, simulate_double_well, FlowConfig, Sampling, SdeConfig};
use ttkoop::hocur::MAXVOL_TOL;
use ttkoop::tensor::{fold, unfold};
use ttkoop::tt::{left_orthonormal_form, SweepConfig};
use ttkoop::*;

fn random_tensor(rng: &mut ChaCha8Rng, dims: &[usize]) -> DenseTensor {
    let size = dims.iter().product();
    DenseTensor::new(dims.to_vec(), (0..size).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn random_snaps(rng: &mut ChaCha8Rng, d: usize, m: usize) -> Snapshots {
    Snapshots::new(d, (0..d * m).map(|_| rng.random_range(-1.5..1.5)).collect()).unwrap()
}

fn random_basis(rng: &mut ChaCha8Rng, n: usize, r: usize) -> OrthonormalBasis {
    let a = Mat::from_fn(n, r, |_, _| rng.random_range(-1.0..1.0));
    OrthonormalBasis::from_span(a.as_ref()).unwrap()
}

fn gauss_spec(rng: &mut ChaCha8Rng, d: usize, p: usize, n: usize) -> BasisSpec {
    let dims = (0..p)
        .map(|k| BasisDimension {
            coordinate: k % d + 1,
            functions: (0..n)
                .map(|_| BasisFunction::Gaussian { center: rng.random_range(-1.0..1.0), scale: rng.random_range(0.2..1.0) })
                .collect(),
        })
        .collect();
    BasisSpec::new(dims).unwrap()
}

/// Random TT ranks within the unfolding bounds `min(∏ n_left, ∏ n_right)`.
fn admissible_ranks(rng: &mut ChaCha8Rng, dims: &[usize], max: usize) -> Vec<usize> {
    let mut ranks = vec![1];
    for k in 1..dims.len() {
        let left: usize = dims[..k].iter().product();
        let right: usize = dims[k..].iter().product();
        ranks.push(rng.random_range(1..=max).min(left).min(right));
    }
    ranks.push(1);
    ranks
}

fn dims_strategy(max_order: usize, max_n: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1..=max_n, 2..=max_order)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn fold_inverts_unfold_bitwise(dims in dims_strategy(5, 4), seed in any::<u64>(), split in 0usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_tensor(&mut rng, &dims);
        let k = 1 + split % (dims.len() - 1);
        let back = fold(unfold(&t, k).unwrap().as_ref(), &dims, k).unwrap();
        prop_assert_eq!(back.data(), t.data());
    }

    #[test]
    fn unfold_is_linear(dims in dims_strategy(4, 4), seed in any::<u64>(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (t, s) = (random_tensor(&mut rng, &dims), random_tensor(&mut rng, &dims));
        let combo: Vec<f64> = t.data().iter().zip(s.data()).map(|(x, y)| a * x + b * y).collect();
        let combo = DenseTensor::new(dims.clone(), combo).unwrap();
        let k = dims.len() - 1;
        let lhs = unfold(&combo, k).unwrap();
        let rhs = unfold(&t, k).unwrap() * faer::Scale(a) + unfold(&s, k).unwrap() * faer::Scale(b);
        prop_assert!((&lhs - &rhs).norm_max() <= 1e-12);
    }

    #[test]
    fn distance_vanishes_exactly_on_contained_spans(seed in any::<u64>(), n in 3usize..10, r in 1usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_basis(&mut rng, n, r);
        // span(G) = span(F) plus one more direction, then rotated
        let extra = Mat::from_fn(n, 1, |_, _| rng.random_range(-1.0..1.0));
        let mut both = Mat::<f64>::zeros(n, r + 1);
        for i in 0..n {
            for j in 0..r {
                both[(i, j)] = f.columns()[(i, j)];
            }
            both[(i, r)] = extra[(i, 0)];
        }
        let mix = Mat::from_fn(r + 1, r + 1, |_, _| rng.random_range(-1.0..1.0));
        let g = OrthonormalBasis::from_span((&both * &mix).as_ref()).unwrap();
        prop_assert!(subspace_distance(&f, &g).unwrap() <= 1e-10);
        let h = random_basis(&mut rng, n, r);
        let d = subspace_distance(&f, &h).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
    }

    #[test]
    fn distance_triangle_inequality(seed in any::<u64>(), n in 3usize..10, r in 1usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (f, g, h) = (random_basis(&mut rng, n, r), random_basis(&mut rng, n, r), random_basis(&mut rng, n, r));
        let fg = subspace_distance(&f, &g).unwrap();
        let gh = subspace_distance(&g, &h).unwrap();
        let fh = subspace_distance(&f, &h).unwrap();
        prop_assert!(fh <= fg + gh + 1e-12);
    }

    #[test]
    fn identity_factor_preserves_distance(seed in any::<u64>(), n in 2usize..8, r in 1usize..3, extra in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = r.min(n);
        let (f, g) = (random_basis(&mut rng, n, r), random_basis(&mut rng, n, r));
        let before = subspace_distance(&f, &g).unwrap();
        let after = subspace_distance(&f.tensor_with_identity(extra), &g.tensor_with_identity(extra)).unwrap();
        prop_assert!((before - after).abs() <= 1e-12);
    }

    #[test]
    fn tt_svd_reproduces_entries(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = [2, 3, 2, 2];
        let t = random_tensor(&mut rng, &dims);
        let tt = tt_from_dense(&t, 0.0).unwrap();
        for flat in 1..=t.data().len() {
            let mi = single_to_multi(flat, &dims).unwrap();
            prop_assert!((tt_entry(&tt, &mi).unwrap() - t.get(&mi).unwrap()).abs() <= 1e-12);
        }
    }

    #[test]
    fn orthonormalization_preserves_tensor(dims in dims_strategy(5, 4), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tt = TensorTrain::random(&dims, &admissible_ranks(&mut rng, &dims, 3), &mut rng).unwrap();
        let before = tt_to_dense(&tt).unwrap();
        let ortho = left_orthonormalize(&tt, 0.0).unwrap();
        let after = tt_to_dense(&ortho).unwrap();
        prop_assert!(before.max_abs_diff(&after).unwrap() <= 1e-12 * before.data().iter().fold(1.0f64, |m, v| m.max(v.abs())));
        // ranks bounded by the unfolding shapes
        for tt in [&ortho, &tt_from_dense(&before, 0.0).unwrap()] {
            for (k, &r) in tt.ranks().iter().enumerate().take(dims.len()).skip(1) {
                let left: usize = dims[..k].iter().product();
                let right: usize = dims[k..].iter().product();
                prop_assert!(r <= left.min(right));
            }
        }
    }

    #[test]
    fn global_svd_reconstruction_bound(dims in dims_strategy(5, 4), seed in any::<u64>(), e in 0usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let eps = [1e-1, 1e-2, 1e-4, 1e-8][e];
        let mut ranks = vec![1];
        ranks.extend((1..dims.len()).map(|_| rng.random_range(1..=4)));
        ranks.push(1);
        let tt = TensorTrain::random(&dims, &ranks, &mut rng).unwrap();
        let p = dims.len() - 1;
        let a = unfold(&tt_to_dense(&tt).unwrap(), p).unwrap();
        let g = global_svd(&tt, eps).unwrap();
        let rel = (&a - g.reconstruct_unfolding().unwrap()).norm_l2() / a.norm_l2();
        prop_assert!(rel <= eps * (p as f64).sqrt(), "rel {} eps {}", rel, eps);
        prop_assert!(g.u_segment.orthonormality_error() <= 1e-10);
        prop_assert!(g.sigma.windows(2).all(|w| w[0] >= w[1]) && g.sigma.iter().all(|&s| s > 0.0));
    }

    #[test]
    fn exact_transform_matches_dense(seed in any::<u64>(), d in 1usize..4, p in 1usize..5, n in 1usize..5, m in 1usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = gauss_spec(&mut rng, d, p, n);
        let x = random_snaps(&mut rng, d, m);
        let full = tt_to_dense(&transform_exact(&x, &spec).unwrap()).unwrap();
        let dense = dense_transform(&x, &spec).unwrap();
        prop_assert!((unfold(&full, p).unwrap() - dense).norm_max() <= 1e-12);
    }

    #[test]
    fn streamed_and_exact_share_the_gram_matrix(seed in any::<u64>(), p in 1usize..4, n in 2usize..5, m in 5usize..60) {
        // both segments are orthonormal, so interfaceᵀ·interface = Ψᵀ·Ψ whatever the gauge
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = gauss_spec(&mut rng, 2, p, n);
        let x = random_snaps(&mut rng, 2, m);
        let streamed = transform_streamed(&x, &spec, &SweepConfig::new(0.0)).unwrap();
        let form = left_orthonormal_form(&transform_exact(&x, &spec).unwrap(), &SweepConfig::new(0.0)).unwrap();
        let psi = dense_transform(&x, &spec).unwrap();
        let gram = psi.transpose() * &psi;
        let scale = gram.norm_max();
        let a = streamed.interface.transpose() * &streamed.interface;
        let b = form.last.transpose() * &form.last;
        prop_assert!((&a - &gram).norm_max() <= 1e-10 * scale);
        prop_assert!((&b - &gram).norm_max() <= 1e-10 * scale);
    }

    #[test]
    fn streamed_ranks_shrink_with_eps(seed in any::<u64>(), p in 1usize..4, m in 10usize..80) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = gauss_spec(&mut rng, 3, p, 4);
        let x = random_snaps(&mut rng, 3, m);
        let mut previous: Option<Vec<usize>> = None;
        for eps in [0.0, 1e-8, 1e-4, 1e-2, 1e-1] {
            let ranks = transform_streamed(&x, &spec, &SweepConfig::new(eps)).unwrap().ranks();
            if let Some(prev) = &previous {
                prop_assert!(prev.iter().zip(&ranks).all(|(a, b)| a >= b), "{:?} then {:?}", prev, ranks);
            }
            previous = Some(ranks);
        }
    }

    #[test]
    fn unused_coordinates_are_never_read(seed in any::<u64>(), m in 1usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = BasisSpec::coordinate_major(vec![vec![BasisFunction::Identity, BasisFunction::Monomial { degree: 2 }]; 2]).unwrap();
        let x = random_snaps(&mut rng, 3, m);
        let mut poked = x.as_slice().to_vec();
        for t in 0..m {
            poked[3 * t + 2] = 1e6 + t as f64;
        }
        let y = Snapshots::new(3, poked).unwrap();
        prop_assert_eq!(dense_transform(&x, &spec).unwrap(), dense_transform(&y, &spec).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn cross_interpolates_on_its_index_sets(seed in any::<u64>(), rank in 2usize..8, m in 10usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = gauss_spec(&mut rng, 3, 3, 3);
        let x = random_snaps(&mut rng, 3, m);
        let cfg = HocurConfig::uniform(rank, &spec.dims(), m);
        let out = hocur_transform(&x, &spec, &cfg).unwrap();
        let dense = dense_transform(&x, &spec).unwrap();
        let dims = spec.dims();
        let scale = dense.norm_max();
        // nestedness
        for q in 1..out.row_sets.len() {
            prop_assert!(out.row_sets[q].extends_prefixes_of(&out.row_sets[q - 1]));
        }
        for w in out.col_sets.windows(2) {
            prop_assert!(w[0].extends_suffixes_of(&w[1]));
        }
        // ranks within caps and within n_{q+1}·r_{q+1}
        let ranks = out.tt.ranks();
        for q in 1..=3 {
            prop_assert!(ranks[q] <= cfg.max_ranks[q - 1]);
            let next = if q < 3 { dims[q] * ranks[q + 1] } else { m };
            prop_assert!(ranks[q] <= next);
        }
        if out.warnings.is_empty() {
            prop_assert!(out.max_certificate <= 1.0 + MAXVOL_TOL + 1e-12);
        }
        // interpolation on the crosses (I_{l-1}, i_l, J_{l+1})
        let mode_sizes = [dims[0], dims[1], dims[2], m];
        for l in 1..=4 {
            for row in out.row_sets[l - 1].entries() {
                for col in out.col_sets[l - 1].entries() {
                    for i in 1..=mode_sizes[l - 1] {
                        let mi = row.join(&MultiIndex::new(vec![i])).join(col);
                        let all = mi.as_slice();
                        let basis = MultiIndex::new(all[..3].to_vec());
                        let exact = dense[(multi_to_single(&basis, &dims).unwrap() - 1, all[3] - 1)];
                        prop_assert!((tt_entry(&out.tt, &mi).unwrap() - exact).abs() <= 1e-8 * scale.max(1.0));
                    }
                }
            }
        }
        let again = hocur_transform(&x, &spec, &cfg).unwrap();
        prop_assert_eq!(again.row_sets, out.row_sets);
        prop_assert_eq!(again.col_sets, out.col_sets);
    }

    #[test]
    fn tensor_edmd_matches_dense(seed in any::<u64>(), p in 1usize..4, m in 40usize..120) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = BasisSpec::gaussian_grid(p, 3, -1.0, 1.0, 0.3).unwrap();
        let x = random_snaps(&mut rng, p, m);
        let y = Snapshots::new(p, x.as_slice().iter().map(|v| 0.9 * v + 0.1 * v.sin()).collect()).unwrap();
        let pair = TrajectoryPair::paired(x.clone(), y.clone()).unwrap();
        let (psi_x, psi_y) = (dense_transform(&x, &spec).unwrap(), dense_transform(&y, &spec).unwrap());
        let (dense, _) = amuse_dense(psi_x.as_ref(), psi_y.as_ref(), 0.0, false).unwrap();
        let res = amuset_edmd(&pair, &spec, &EdmdOptions::new(0.0, Method::Exact)).unwrap();
        prop_assert_eq!(res.values.len(), dense.values.len());
        for (a, b) in res.values.iter().zip(&dense.values) {
            prop_assert!((a - b).norm() <= 1e-8);
        }
        // Φ = Ξᵀ · Ψ(X)
        let xi = res.eigentensor.as_ref().unwrap().to_dense().unwrap();
        let psi_c = Mat::from_fn(psi_x.nrows(), psi_x.ncols(), |i, j| faer::c64::new(psi_x[(i, j)], 0.0));
        let phi = xi.transpose() * &psi_c;
        let diff = (&phi - &res.eigenfunctions).norm_max();
        prop_assert!(diff <= 1e-8 * phi.norm_max().max(1.0));

        let cca_ref = cca_dense(psi_x.as_ref(), psi_y.as_ref(), 0.0).unwrap();
        prop_assert!(cca_ref.whitening_residual.unwrap() <= 1e-10);
        let cca = amuset_cca(&x, &y, &spec, &spec, &CcaOptions::new(0.0, Method::Streamed)).unwrap();
        prop_assert!(cca.real_values().iter().all(|&l| (0.0..=1.0 + 1e-8).contains(&l)));
        for (a, b) in cca.singular_values.iter().zip(&cca_ref.singular_values) {
            prop_assert!((a - b).abs() <= 1e-8);
        }
    }

    #[test]
    fn zero_lag_gives_unit_spectrum(seed in any::<u64>(), m in 20usize..80) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = BasisSpec::gaussian_grid(2, 3, -1.0, 1.0, 0.4).unwrap();
        let z = random_snaps(&mut rng, 2, m);
        let idx: Vec<usize> = (1..=m).collect();
        let pair = TrajectoryPair::indexed(z.clone(), idx.clone(), idx).unwrap();
        let edmd = amuset_edmd(&pair, &spec, &EdmdOptions::new(1e-10, Method::Streamed)).unwrap();
        prop_assert!(edmd.values.iter().all(|v| (v.re - 1.0).abs() <= 1e-10 && v.im.abs() <= 1e-10));
        let cca = amuset_cca(&z, &z, &spec, &spec, &CcaOptions::new(1e-10, Method::Exact)).unwrap();
        prop_assert!(cca.real_values().iter().all(|v| (v - 1.0).abs() <= 1e-10));
    }

    #[test]
    fn generators_are_deterministic(seed in any::<u64>()) {
        let cfg = SdeConfig { frames: 500, seed, ..SdeConfig::default() };
        let a = simulate_double_well(&cfg).unwrap();
        let b = simulate_double_well(&cfg).unwrap();
        prop_assert_eq!(a.as_slice(), b.as_slice());
        let flow = FlowConfig { tau: 0.5, ..FlowConfig::default() };
        let pair = generate_abc_dataset(3, &flow, Sampling::Random { seed }).unwrap();
        let again = generate_abc_dataset(3, &flow, Sampling::Random { seed }).unwrap();
        let (y, y2) = (pair.y().unwrap(), again.y().unwrap());
        prop_assert_eq!(y.as_slice(), y2.as_slice());
        let two_pi = 2.0 * std::f64::consts::PI;
        prop_assert!(pair.x().unwrap().as_slice().iter().chain(y.as_slice()).all(|&v| (0.0..two_pi).contains(&v)));
    }
}
