//! Scratch calibration for the sinusoid 2-point experiment: SimPEL fit
//! quality and method ordering across settings.

use nalgebra::DMatrix;
use simpel::eval::{fit_method, make_dataset, nll, rmse, Method, ModelSettings, Task};
use simpel::rng::stream;
use simpel::simulators::SystemKind;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let mode = args.get(1).map(String::as_str).unwrap_or("fit");

    match mode {
        // Inspect SimPEL's fit on the 2-point sinusoid across settings.
        "fit" => {
            let task = Task::new(SystemKind::Sinusoid);
            for iterations in [1500usize, 4000] {
                for prior_samples in [64usize, 256] {
                    for lr in [5e-3, 2e-2] {
                        let mut s = ModelSettings::default();
                        s.iterations = iterations;
                        s.prior_samples = prior_samples;
                        s.learning_rate = lr;
                        s.gap_variance = 0.01;
                        s.gap_lengthscale = 1.0;
                        let mut nlls = Vec::new();
                        let mut rmses = Vec::new();
                        for seed in 0..3u64 {
                            let mut data_rng = stream(0, "calib-data", seed);
                            let (train, test) =
                                make_dataset(&task, 2, 200, 0.1, &mut data_rng).unwrap();
                            let mut fit_rng = stream(1, "calib-fit", seed);
                            let model =
                                fit_method(&task, Method::Simpel, &s, &train, &mut fit_rng)
                                    .unwrap();
                            let p = model.predict(&test.x).unwrap();
                            nlls.push(nll(&p, &test.y).unwrap());
                            rmses.push(rmse(&p.mean, &test.y).unwrap());
                            // Check fit at the two training points.
                            let pt = model.predict(&train.x).unwrap();
                            if seed == 0 {
                                let fit_err = rmse(&pt.mean, &train.y).unwrap();
                                print!("[train-fit {fit_err:.3}] ");
                            }
                        }
                        let mean_nll: f64 = nlls.iter().sum::<f64>() / nlls.len() as f64;
                        let mean_rmse: f64 = rmses.iter().sum::<f64>() / rmses.len() as f64;
                        println!(
                            "iters {iterations:5} N {prior_samples:3} lr {lr:.0e}: nll {mean_nll:7.3} rmse {mean_rmse:6.3} ({nlls:.2?})"
                        );
                    }
                }
            }
        }
        // Method ordering at the chosen settings, 5 seeds.
        "order" => {
            let task = Task::new(SystemKind::Sinusoid);
            let mut s = ModelSettings::default();
            for (k, v) in std::env::vars() {
                match k.as_str() {
                    "CAL_ITERS" => s.iterations = v.parse().unwrap(),
                    "CAL_N" => s.prior_samples = v.parse().unwrap(),
                    "CAL_LR" => s.learning_rate = v.parse().unwrap(),
                    "CAL_GAPVAR" => s.gap_variance = v.parse().unwrap(),
                    "CAL_GAPLEN" => s.gap_lengthscale = v.parse().unwrap(),
                    "CAL_GPVAR" => s.gp_variance = v.parse().unwrap(),
                    _ => {}
                }
            }
            println!(
                "iters {} N {} lr {} gap ({}, {}) gp ({}, {})",
                s.iterations,
                s.prior_samples,
                s.learning_rate,
                s.gap_variance,
                s.gap_lengthscale,
                s.gp_variance,
                s.gp_lengthscale
            );
            for method in [
                Method::Simpel,
                Method::Greybox,
                Method::Fsvgd,
                Method::Svgd,
                Method::SimpelOnlySim,
                Method::Sysid,
            ] {
                let mut nlls = Vec::new();
                for seed in 0..5u64 {
                    let mut data_rng = stream(0, "calib-data", seed);
                    let (train, test) = make_dataset(&task, 2, 200, 0.1, &mut data_rng).unwrap();
                    let mut fit_rng = stream(1, "calib-fit", seed);
                    let model = fit_method(&task, method, &s, &train, &mut fit_rng).unwrap();
                    let p = model.predict(&test.x).unwrap();
                    nlls.push(nll(&p, &test.y).unwrap());
                }
                let mut sorted = nlls.clone();
                sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
                println!(
                    "{:16} median {:8.3}  nlls {:.2?}",
                    method.id(),
                    sorted[2],
                    nlls
                );
            }
        }
        // Grid profile of one SimPEL fit: mean/std vs truth.
        "profile" => {
            let task = Task::new(SystemKind::Sinusoid);
            let mut s = ModelSettings::default();
            s.iterations = 4000;
            s.learning_rate = 2e-2;
            let mut data_rng = stream(0, "calib-data", 0);
            let (train, _) = make_dataset(&task, 2, 200, 0.1, &mut data_rng).unwrap();
            println!("train x: {:?}", train.x.as_slice());
            println!("train y: {:?}", train.y.as_slice());
            let mut fit_rng = stream(1, "calib-fit", 0);
            let model = fit_method(&task, Method::Simpel, &s, &train, &mut fit_rng).unwrap();
            let grid = DMatrix::from_fn(21, 1, |r, _| -5.0 + 0.5 * r as f64);
            let p = model.predict(&grid).unwrap();
            let truth = task.oracle_prediction(&grid).unwrap();
            for r in 0..21 {
                println!(
                    "x {:5.1}  mean {:7.3}  sd {:6.3}  truth {:7.3}",
                    grid[(r, 0)],
                    p.mean[(r, 0)],
                    p.variance[(r, 0)].sqrt(),
                    truth.mean[(r, 0)]
                );
            }
        }
        other => eprintln!("unknown mode {other}"),
    }
}
