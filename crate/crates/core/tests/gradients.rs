//! Analytic gradients of the full model against central finite differences.

use hornets_core::activation::{poly_clip, poly_clip_grad};
use hornets_core::training::Grads;
use hornets_core::{ActivationKind, HorNetsConfig, HorNetsModel, Matrix, Route, RngStream};
use proptest::prelude::*;

const H: f64 = 1e-5;
const TOLERANCE: f64 = 1e-4;
/// Gradients below this magnitude are compared on an absolute scale.
const REL_FLOOR: f64 = 1e-6;
/// Minimum distance of every pre-activation from a kink of the activation.
const KINK_MARGIN: f64 = 1e-3;

const ROWS: usize = 4;
const FEATURES: usize = 6;
const CLASSES: usize = 3;
const LABELS: [usize; ROWS] = [0, 1, 2, 1];

fn rel_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR)
}

fn random_matrix(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut RngStream) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.uniform(lo, hi)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

fn random_input(route: Route, rng: &mut RngStream) -> Matrix {
    match route {
        Route::Categorical => {
            let data = (0..ROWS * FEATURES).map(|_| f64::from(rng.bernoulli(0.5) as u8)).collect();
            Matrix::from_vec(ROWS, FEATURES, data).unwrap()
        }
        Route::Continuous => random_matrix(ROWS, FEATURES, -2.0, 2.0, rng),
    }
}

fn near_kink(act: ActivationKind, z: f64) -> bool {
    match act {
        ActivationKind::PolyClip { .. } => (z.abs() - 1.0).abs() < KINK_MARGIN,
        ActivationKind::Relu => z.abs() < KINK_MARGIN,
    }
}

/// Random model and batch whose pre-activations stay clear of kinks.
fn draw(act: ActivationKind, route: Route, seed: u64) -> (HorNetsModel, Matrix) {
    let mut rng = RngStream::new(seed);
    loop {
        let cfg = HorNetsConfig {
            activation: act,
            order: 3,
            num_rules: 8,
            seed: rng.next_u64(),
            ..Default::default()
        };
        let mut model = HorNetsModel::new(cfg, FEATURES, CLASSES).unwrap();
        let x = random_input(route, &mut rng);
        model.lin_att.w = random_matrix(FEATURES, CLASSES, -1.0, 1.0, &mut rng);
        model.lin_att.b = (0..CLASSES).map(|_| rng.uniform(-0.5, 0.5)).collect();
        let rules = model.cat_int.num_rules();
        model.cat_int.m = random_matrix(rules, 3, -0.7, 0.7, &mut rng);
        model.cat_int.w = random_matrix(rules, CLASSES, -1.0, 1.0, &mut rng);
        model.cat_int.b = (0..CLASSES).map(|_| rng.uniform(-0.5, 0.5)).collect();
        if route == Route::Categorical {
            let prepared = model.prepare_categorical(&x).unwrap();
            let (pre, _) =
                hornets_core::layers::comb_act_op(&model.cat_int.m, &prepared, &model.cat_int.comb_table, act)
                    .unwrap();
            if pre.as_slice().iter().any(|&z| near_kink(act, z)) {
                continue;
            }
        }
        return (model, x);
    }
}

fn loss(model: &HorNetsModel, x: &Matrix, route: Route) -> f64 {
    let mut rng = RngStream::new(0);
    model.loss_and_grads(x, &LABELS, route, false, &mut rng).unwrap().0
}

/// Parameter blocks of one route, paired with their analytic gradients.
fn blocks(model: &mut HorNetsModel, grads: &Grads) -> Vec<(&'static str, Vec<f64>, Vec<f64>)> {
    match grads {
        Grads::LinAtt(g) => vec![
            ("linAtt.w", model.lin_att.w.as_slice().to_vec(), g.w.as_slice().to_vec()),
            ("linAtt.b", model.lin_att.b.clone(), g.b.clone()),
        ],
        Grads::CatInt(g) => vec![
            ("catInt.M", model.cat_int.m.as_slice().to_vec(), g.m.as_slice().to_vec()),
            ("catInt.w", model.cat_int.w.as_slice().to_vec(), g.w.as_slice().to_vec()),
            ("catInt.b", model.cat_int.b.clone(), g.b.clone()),
        ],
    }
}

fn param_mut<'a>(model: &'a mut HorNetsModel, name: &str) -> &'a mut [f64] {
    match name {
        "linAtt.w" => model.lin_att.w.as_mut_slice(),
        "linAtt.b" => &mut model.lin_att.b,
        "catInt.M" => model.cat_int.m.as_mut_slice(),
        "catInt.w" => model.cat_int.w.as_mut_slice(),
        "catInt.b" => &mut model.cat_int.b,
        _ => unreachable!(),
    }
}

/// Largest relative error over every parameter of the route.
fn worst_error(act: ActivationKind, route: Route, seed: u64) -> (f64, String) {
    let (mut model, x) = draw(act, route, seed);
    let mut rng = RngStream::new(0);
    let (_, grads) = model.loss_and_grads(&x, &LABELS, route, false, &mut rng).unwrap();
    let mut worst = (0.0, String::new());
    for (name, values, analytic) in blocks(&mut model, &grads) {
        for (i, &g) in analytic.iter().enumerate() {
            param_mut(&mut model, name)[i] = values[i] + H;
            let up = loss(&model, &x, route);
            param_mut(&mut model, name)[i] = values[i] - H;
            let down = loss(&model, &x, route);
            param_mut(&mut model, name)[i] = values[i];
            let numeric = (up - down) / (2.0 * H);
            let err = rel_error(g, numeric);
            if err > worst.0 {
                worst = (err, format!("{name}[{i}]: analytic {g:e} numeric {numeric:e}"));
            }
        }
    }
    worst
}

const ACTIVATIONS: [ActivationKind; 3] = [
    ActivationKind::PolyClip { k: 1 },
    ActivationKind::PolyClip { k: 0 },
    ActivationKind::Relu,
];

#[test]
fn twenty_draws_per_route_and_activation() {
    for act in ACTIVATIONS {
        for route in [Route::Continuous, Route::Categorical] {
            for draw in 0..20 {
                let (err, at) = worst_error(act, route, 1000 + draw);
                assert!(err <= TOLERANCE, "{act:?} {route}: draw {draw}: {at} (rel {err:e})");
            }
        }
    }
}

#[test]
fn higher_polyclip_exponents() {
    for k in [2, 3] {
        for draw in 0..5 {
            let (err, at) = worst_error(ActivationKind::PolyClip { k }, Route::Categorical, 77 + draw);
            assert!(err <= TOLERANCE, "k={k}: {at}");
        }
    }
}

proptest! {
    #[test]
    fn random_seeds_match_finite_differences(seed in any::<u64>(), relu in any::<bool>(), cat in any::<bool>()) {
        let act = if relu { ActivationKind::Relu } else { ActivationKind::PolyClip { k: 1 } };
        let route = if cat { Route::Categorical } else { Route::Continuous };
        let (err, at) = worst_error(act, route, seed);
        prop_assert!(err <= TOLERANCE, "{}", at);
    }

    #[test]
    fn poly_clip_grad_matches_central_difference(x in -0.999f64..0.999, k in 0u32..4) {
        let h = 1e-6;
        let numeric = (poly_clip(x + h, k) - poly_clip(x - h, k)) / (2.0 * h);
        prop_assert!((poly_clip_grad(x, k) - numeric).abs() <= 1e-5);
    }
}
