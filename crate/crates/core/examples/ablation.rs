//! Train every sampling strategy on one synthetic world and compare retrieval.
//!
//! cargo run --release -p rpr-core --example ablation -- [config.toml] [seeds]

use std::time::Instant;

use rpr_core::config::RunConfig;
use rpr_core::embed::{embed_trajectory, projector_for, EmbedMode, EmbeddingSet};
use rpr_core::encoder::{EncoderParams, Mode};
use rpr_core::eval::{distance_matrix, evaluate, ring_key, EvalConfig, Metric, Representation};
use rpr_core::sampler::Strategy;
use rpr_core::scan::rotate_azimuth;
use rpr_core::sim::{simulate, Trajectory};
use rpr_core::train::train;

fn rotation_similarity(params: &EncoderParams, traj: &Trajectory) -> f64 {
    let projector = projector_for(params, traj).unwrap();
    let quarter = traj.geometry().azimuths / 4;
    let mut rng = rpr_core::rng::stream(0, "unused", 0);
    let mut acc = 0.0;
    let frames: Vec<usize> = (0..traj.len()).step_by(10).collect();
    for &i in &frames {
        let s = &traj.scans()[i];
        let a = params
            .forward(&projector.project(s).unwrap(), Mode::Eval, &mut rng)
            .unwrap()
            .0;
        let b = params
            .forward(
                &projector.project(&rotate_azimuth(s, quarter)).unwrap(),
                Mode::Eval,
                &mut rng,
            )
            .unwrap()
            .0;
        acc += a
            .values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| x * y)
            .sum::<f64>();
    }
    acc / frames.len() as f64
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let base = match args.get(1) {
        Some(p) if p != "-" => RunConfig::load(p).unwrap(),
        _ => RunConfig::default(),
    };
    let seeds: Vec<u64> = args
        .get(2)
        .map(|s| s.split(',').map(|v| v.parse().unwrap()).collect())
        .unwrap_or(vec![0]);
    let strategies: Vec<Strategy> = args
        .get(3)
        .map(|s| {
            s.split(',')
                .filter(|v| *v != "none")
                .map(|v| v.parse().unwrap())
                .collect()
        })
        .unwrap_or(Strategy::ALL.to_vec());
    for seed in seeds {
        let cfg = RunConfig {
            seed,
            ..base.clone()
        }
        .resolve()
        .unwrap();
        let t0 = Instant::now();
        let train_traj = simulate(
            &RunConfig {
                run: 0,
                ..cfg.clone()
            }
            .simulation(),
        )
        .unwrap();
        let map_full = simulate(
            &RunConfig {
                run: 1,
                ..cfg.clone()
            }
            .simulation(),
        )
        .unwrap();
        let map = map_full.slice(0, map_full.len() / 2).unwrap();
        let query = simulate(
            &RunConfig {
                run: 2,
                ..cfg.clone()
            }
            .simulation(),
        )
        .unwrap();
        println!(
            "seed {seed}: simulated in {:.1}s",
            t0.elapsed().as_secs_f64()
        );
        let eval_cfg = EvalConfig {
            decompose: true,
            ..cfg.evaluation.clone()
        };
        let rk = |t: &Trajectory| {
            Representation::Points(
                t.scans()
                    .iter()
                    .map(|s| ring_key(s).into_values())
                    .collect(),
            )
        };
        let dm = distance_matrix(&rk(&query), &rk(&map), Metric::Euclidean).unwrap();
        let r = evaluate(&dm, query.poses(), map.poses(), &eval_cfg).unwrap();
        println!(
            "  ring_key  R@1 {:.3} rpt {:.3} rev {:.3} R@P80 {:.3}",
            r.recall_at(1).unwrap(),
            r.rpt.as_ref().unwrap().recall_at(1).unwrap(),
            r.rev.as_ref().unwrap().recall_at(1).unwrap(),
            r.recall_at_precision(80.0).unwrap()
        );
        for &strategy in &strategies {
            let t1 = Instant::now();
            let mut sampler = cfg.sampler;
            sampler.strategy = strategy;
            let out = train(
                &train_traj,
                &cfg.encoder,
                &sampler,
                &cfg.loss,
                &cfg.training,
                &mut |_, _| {},
            )
            .unwrap();
            let train_s = t1.elapsed().as_secs_f64();
            let pts = |t: &Trajectory| {
                embed_trajectory(&out.params, t, EmbedMode::Point, 0, seed).unwrap()
            };
            let dm = distance_matrix(
                &pts(&query).to_representation(),
                &pts(&map).to_representation(),
                Metric::Cosine,
            )
            .unwrap();
            let r = evaluate(&dm, query.poses(), map.poses(), &eval_cfg).unwrap();
            let mut line = format!(
                "  {:<5} R@1 {:.3} rpt {:.3} rev {:.3} R@P80 {:.3} rot {:.3} loss {:.2}->{:.2} ({:.0}s)",
                strategy.as_str(),
                r.recall_at(1).unwrap(),
                r.rpt.as_ref().unwrap().recall_at(1).unwrap(),
                r.rev.as_ref().unwrap().recall_at(1).unwrap(),
                r.recall_at_precision(80.0).unwrap(),
                rotation_similarity(&out.params, &query),
                out.epoch_losses[0],
                out.epoch_losses.last().unwrap(),
                train_s
            );
            if strategy == Strategy::VTR2 {
                let fam = |t: &Trajectory| {
                    embed_trajectory(
                        &out.params,
                        t,
                        EmbedMode::Family,
                        cfg.inference.samples,
                        seed,
                    )
                    .unwrap()
                };
                let (q, m): (EmbeddingSet, EmbeddingSet) = (fam(&query), fam(&map));
                let dm =
                    distance_matrix(&q.to_representation(), &m.to_representation(), Metric::Kl)
                        .unwrap();
                let rk = evaluate(&dm, query.poses(), map.poses(), &eval_cfg).unwrap();
                line += &format!(
                    " | kl R@1 {:.3} R@P80 {:.3}",
                    rk.recall_at(1).unwrap(),
                    rk.recall_at_precision(80.0).unwrap()
                );
            }
            println!("{line}");
        }
    }
}
