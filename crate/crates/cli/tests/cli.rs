use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rpr_core::embed::{load_embeddings, save_embeddings, EmbeddingSet};
use rpr_core::encoder::Embedding;
use rpr_core::eval::read_report;
use rpr_core::sim::{load_trajectory, read_poses};
use rpr_core::train::read_loss_log;

fn rpr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rpr"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = rpr(args);
    assert!(
        out.status.success(),
        "rpr {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: &str = r#"
[world]
n_scatterers = 400
extent_m = 300.0
[geometry]
azimuths = 32
bins = 64
bin_size_m = 2.0
[encoder]
input_side = 16
pixel_size_m = 16.0
widths = [4, 8]
embedding_dim = 8
[sampler]
batch_size = 4
[training]
epochs = 2
steps_per_epoch = 3
[inference]
samples = 4
"#;

fn small_config(dir: &Path) -> String {
    let p = dir.join("small.toml");
    fs::write(&p, SMALL).unwrap();
    p.to_str().unwrap().to_string()
}

fn assert_resolved(dir: &Path) {
    assert!(
        dir.join("config.toml").is_file(),
        "{} lacks config.toml",
        dir.display()
    );
    let v = fs::read_to_string(dir.join("VERSION")).unwrap();
    assert!(v.starts_with("rpr "));
}

#[test]
fn simulate_emits_requested_frames_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        ok(&[
            "simulate",
            "--config",
            &cfg,
            "--frames",
            "100",
            "--out",
            s(d),
        ]);
    }
    assert_eq!(fs::read_dir(a.join("scans")).unwrap().count(), 100);
    assert!(a.join("poses.csv").is_file() && a.join("meta.toml").is_file());
    assert_resolved(&a);
    for i in [0, 57, 99] {
        let name = format!("scans/{i:06}.rprs");
        assert_eq!(
            fs::read(a.join(&name)).unwrap(),
            fs::read(b.join(&name)).unwrap()
        );
    }
    assert_eq!(
        fs::read(a.join("poses.csv")).unwrap(),
        fs::read(b.join("poses.csv")).unwrap()
    );
}

#[test]
fn pipeline_runs_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let t = tmp.path();
    let traj = t.join("traj");
    ok(&[
        "simulate",
        "--config",
        &cfg,
        "--frames",
        "120",
        "--out",
        s(&traj),
    ]);
    for strategy in ["vR", "vTR2"] {
        let run = t.join(strategy);
        ok(&[
            "train",
            "--config",
            &cfg,
            "--trajectory",
            s(&traj),
            "--strategy",
            strategy,
            "--out",
            s(&run),
        ]);
        assert_resolved(&run);
        assert_eq!(read_loss_log(run.join("loss.csv")).unwrap().len(), 2);
        let ckpt = run.join("checkpoint.rpck");
        let emb = run.join("emb");
        for (part, slice) in [("map", "0:60"), ("query", "60:")] {
            ok(&[
                "embed",
                "--config",
                &cfg,
                "--checkpoint",
                s(&ckpt),
                "--trajectory",
                s(&traj),
                "--slice",
                slice,
                "--out",
                s(&emb.join(format!("{part}.rpem"))),
            ]);
        }
        assert_resolved(&emb);
        let map = load_embeddings(emb.join("map.rpem")).unwrap();
        assert_eq!(map.len(), 60);
        let eval = run.join("eval");
        ok(&[
            "evaluate",
            "--config",
            &cfg,
            "--map",
            s(&emb.join("map.rpem")),
            "--query",
            s(&emb.join("query.rpem")),
            "--map-poses",
            s(&traj),
            "--map-slice",
            "0:60",
            "--query-poses",
            s(&traj),
            "--query-slice",
            "60:",
            "--decompose",
            "--dump-distances",
            "--out",
            s(&eval),
        ]);
        assert_resolved(&eval);
        let report = read_report(eval.join("report.json")).unwrap();
        assert_eq!(report.queries, 60);
        assert!(report.rpt.is_some() && report.rev.is_some());
        assert!(eval.join("pr_curve.csv").is_file());
        let dm = fs::read_to_string(eval.join("distance_matrix.csv")).unwrap();
        assert_eq!(dm.lines().count(), 60);
    }
}

#[test]
fn family_embeddings_record_samples_and_default_to_kl() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let t = tmp.path();
    let traj = t.join("traj");
    ok(&[
        "simulate",
        "--config",
        &cfg,
        "--frames",
        "80",
        "--out",
        s(&traj),
    ]);
    let run = t.join("run");
    ok(&[
        "train",
        "--config",
        &cfg,
        "--trajectory",
        s(&traj),
        "--epochs",
        "1",
        "--out",
        s(&run),
    ]);
    let fam = t.join("fam.rpem");
    ok(&[
        "embed",
        "--config",
        &cfg,
        "--checkpoint",
        s(&run.join("checkpoint.rpck")),
        "--trajectory",
        s(&traj),
        "--mode",
        "family",
        "--out",
        s(&fam),
    ]);
    match load_embeddings(&fam).unwrap() {
        EmbeddingSet::Families(f) => {
            assert_eq!(f.len(), 80);
            assert!(f.iter().all(|x| x.samples == 4));
        }
        other => panic!("expected families, got {:?}", other.mode()),
    }
    let eval = t.join("eval");
    ok(&[
        "evaluate",
        "--config",
        &cfg,
        "--map",
        s(&fam),
        "--query",
        s(&fam),
        "--map-poses",
        s(&traj),
        "--query-poses",
        s(&traj),
        "--out",
        s(&eval),
    ]);
    let text = fs::read_to_string(eval.join("report.json")).unwrap();
    assert!(text.contains("\"metric\": \"kl\""));
}

#[test]
fn point_embedding_is_bit_identical_on_rerun() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let t = tmp.path();
    let traj = t.join("traj");
    ok(&[
        "simulate",
        "--config",
        &cfg,
        "--frames",
        "60",
        "--out",
        s(&traj),
    ]);
    let (r1, r2) = (t.join("r1"), t.join("r2"));
    for r in [&r1, &r2] {
        ok(&[
            "train",
            "--config",
            &cfg,
            "--trajectory",
            s(&traj),
            "--out",
            s(r),
        ]);
    }
    assert_eq!(
        fs::read(r1.join("loss.csv")).unwrap(),
        fs::read(r2.join("loss.csv")).unwrap()
    );
    assert_eq!(
        fs::read(r1.join("checkpoint.rpck")).unwrap(),
        fs::read(r2.join("checkpoint.rpck")).unwrap()
    );
    let ckpt = r1.join("checkpoint.rpck");
    let (e1, e2) = (t.join("e1.rpem"), t.join("e2.rpem"));
    for e in [&e1, &e2] {
        ok(&[
            "embed",
            "--config",
            &cfg,
            "--checkpoint",
            s(&ckpt),
            "--trajectory",
            s(&traj),
            "--out",
            s(e),
        ]);
    }
    assert_eq!(fs::read(&e1).unwrap(), fs::read(&e2).unwrap());
}

#[test]
fn pose_derived_embeddings_give_perfect_recall() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let t = tmp.path();
    let traj = t.join("traj");
    ok(&[
        "simulate",
        "--config",
        &cfg,
        "--frames",
        "200",
        "--set",
        "route.kind=\"loop_repeat\"",
        "--out",
        s(&traj),
    ]);
    let (_, poses) = read_poses(traj.join("poses.csv")).unwrap();
    // positions padded with a large constant so cosine ranks by planar distance
    let emb: Vec<Embedding> = poses
        .iter()
        .map(|p| {
            let v = [p.x, p.y, 1e4];
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            Embedding::from_unit(v.iter().map(|x| x / n).collect()).unwrap()
        })
        .collect();
    let (map, query) = (t.join("map.rpem"), t.join("query.rpem"));
    save_embeddings(&map, &EmbeddingSet::Points(emb[..100].to_vec())).unwrap();
    save_embeddings(&query, &EmbeddingSet::Points(emb[100..].to_vec())).unwrap();
    let eval = t.join("eval");
    ok(&[
        "evaluate",
        "--config",
        &cfg,
        "--map",
        s(&map),
        "--query",
        s(&query),
        "--map-poses",
        s(&traj),
        "--map-slice",
        ":100",
        "--query-poses",
        s(&traj),
        "--query-slice",
        "100:",
        "--out",
        s(&eval),
    ]);
    let r = read_report(eval.join("report.json")).unwrap();
    assert_eq!(r.recall_at(1), Some(1.0));
}

#[test]
fn baseline_evaluates_ring_keys() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let t = tmp.path();
    let traj = t.join("traj");
    ok(&[
        "simulate",
        "--config",
        &cfg,
        "--frames",
        "120",
        "--out",
        s(&traj),
    ]);
    assert_eq!(load_trajectory(&traj).unwrap().len(), 120);
    let out = t.join("rk");
    let o = ok(&[
        "baseline",
        "--config",
        &cfg,
        "--map",
        s(&traj),
        "--map-slice",
        "0:60",
        "--query",
        s(&traj),
        "--query-slice",
        "60:120",
        "--decompose",
        "--out",
        s(&out),
    ]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("rev R@1"));
    let r = read_report(out.join("report.json")).unwrap();
    assert_eq!(r.metric.as_str(), "euclidean");
    assert_resolved(&out);
}

#[test]
fn flags_override_the_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let out = tmp.path().join("sim");
    ok(&[
        "simulate",
        "--config",
        &cfg,
        "--seed",
        "7",
        "--frames",
        "50",
        "--set",
        "world.n_scatterers=50",
        "--route",
        "figure_eight",
        "--out",
        s(&out),
    ]);
    let resolved = fs::read_to_string(out.join("config.toml")).unwrap();
    let v: toml::Table = resolved.parse().unwrap();
    assert_eq!(v["seed"].as_integer(), Some(7));
    assert_eq!(v["sampler"]["seed"].as_integer(), Some(7));
    assert_eq!(v["world"]["n_scatterers"].as_integer(), Some(50));
    assert_eq!(v["route"]["kind"].as_str(), Some("figure_eight"));
}

#[test]
fn exit_codes_distinguish_validation_from_io() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let out = tmp.path().join("x");
    let bad = rpr(&[
        "simulate",
        "--config",
        &cfg,
        "--set",
        "loss.temperature=0.0",
        "--out",
        s(&out),
    ]);
    assert_eq!(bad.status.code(), Some(1));
    let unknown = rpr(&[
        "simulate",
        "--config",
        &cfg,
        "--set",
        "world.colour=3",
        "--out",
        s(&out),
    ]);
    assert_eq!(unknown.status.code(), Some(1));
    let usage = rpr(&["simulate"]);
    assert_eq!(usage.status.code(), Some(1));
    let missing = rpr(&[
        "train",
        "--trajectory",
        s(&tmp.path().join("nope")),
        "--out",
        s(&out),
    ]);
    assert_eq!(missing.status.code(), Some(2));
    let no_config = rpr(&[
        "simulate",
        "--config",
        s(&tmp.path().join("nope.toml")),
        "--out",
        s(&out),
    ]);
    assert_eq!(no_config.status.code(), Some(2));
}

#[test]
fn misaligned_poses_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let t = tmp.path();
    let traj = t.join("traj");
    ok(&[
        "simulate",
        "--config",
        &cfg,
        "--frames",
        "40",
        "--out",
        s(&traj),
    ]);
    let e = Embedding::from_unit(vec![1.0, 0.0]).unwrap();
    let emb = t.join("e.rpem");
    save_embeddings(&emb, &EmbeddingSet::Points(vec![e; 10])).unwrap();
    let o = rpr(&[
        "evaluate",
        "--config",
        &cfg,
        "--map",
        s(&emb),
        "--query",
        s(&emb),
        "--map-poses",
        s(&traj),
        "--query-poses",
        s(&traj),
        "--out",
        s(&t.join("ev")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("poses"));
}
