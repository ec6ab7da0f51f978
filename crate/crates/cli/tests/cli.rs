use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_deepgp"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

/// The shipped desk spec shrunk to a few hundred steps on a 20-cell mesh.
fn small_spec(dir: &Path, edit: impl Fn(String) -> String) -> PathBuf {
    let text = fs::read_to_string(configs().join("desk_1d_J50_N2.toml")).unwrap();
    let text = text
        .replace("samples = 50000", "samples = 400")
        .replace("burn_in = 10000", "burn_in = 100")
        .replace("sampling_mesh = 100", "sampling_mesh = 20")
        .replace("generation_mesh = 200", "generation_mesh = 40")
        .replace("n_obs = 50", "n_obs = 10");
    let path = dir.join("spec.toml");
    fs::write(&path, edit(text)).unwrap();
    path
}

fn run(cmd: &mut Command) -> i32 {
    let out = cmd.output().unwrap();
    out.status.code().unwrap()
}

#[test]
fn infer_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(dir.path(), |s| s);
    for out in ["a", "b"] {
        assert_eq!(run(bin().args(["infer", "--spec"]).arg(&spec).arg("--out").arg(dir.path().join(out))), 0);
    }
    for file in ["summary.json", "summary.csv", "data.csv", "trace.csv"] {
        let a = fs::read(dir.path().join("a").join(file)).unwrap();
        let b = fs::read(dir.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file}");
    }
    let json = fs::read_to_string(dir.path().join("a/summary.json")).unwrap();
    assert!(json.contains("\"spec_hash\"") && json.contains("\"bands\": \"pointwise\""));
}

#[test]
fn checkpointed_infer_matches() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(dir.path(), |s| s);
    assert_eq!(run(bin().args(["infer", "--spec"]).arg(&spec).arg("--out").arg(dir.path().join("a"))), 0);
    let ck = dir.path().join("chain.ckpt");
    assert_eq!(
        run(bin()
            .args(["infer", "--spec"])
            .arg(&spec)
            .arg("--out")
            .arg(dir.path().join("b"))
            .arg("--checkpoint")
            .arg(&ck)
            .args(["--checkpoint-every", "150"])),
        0
    );
    assert!(ck.exists());
    assert_eq!(fs::read(dir.path().join("a/summary.json")).unwrap(), fs::read(dir.path().join("b/summary.json")).unwrap());
}

#[test]
fn sample_prior_writes_one_file_per_layer() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("prior");
    let status = run(bin()
        .args(["sample-prior", "--config"])
        .arg(configs().join("covfun_1d.toml"))
        .args(["--depth", "6", "--seed", "1", "--out"])
        .arg(&out));
    assert_eq!(status, 0);
    let mut names: Vec<String> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names.len(), 8);
    assert_eq!(names.iter().filter(|n| n.ends_with(".csv")).count(), 7);
    assert!(names.contains(&"manifest.json".to_string()));
    let again = dir.path().join("again");
    bin().args(["sample-prior", "--config"]).arg(configs().join("covfun_1d.toml")).args(["--depth", "6", "--out"]).arg(&again).status().unwrap();
    for n in &names {
        assert_eq!(fs::read(out.join(n)).unwrap(), fs::read(again.join(n)).unwrap());
    }
    let svg = dir.path().join("layer.svg");
    assert_eq!(run(bin().arg("plot").arg("--input").arg(out.join("layer_003.csv")).arg("--output").arg(&svg)), 0);
    assert!(fs::read_to_string(svg).unwrap().starts_with("<svg"));
}

#[test]
fn diagnose_runs_for_every_shipped_chain() {
    let dir = tempfile::tempdir().unwrap();
    for cfg in ["composition_1d", "convolution_flat", "covfun_1d"] {
        let out = dir.path().join(format!("{cfg}.json"));
        assert_eq!(run(bin().args(["diagnose", "--config"]).arg(configs().join(format!("{cfg}.toml"))).arg("--out").arg(&out)), 0);
        let again = dir.path().join(format!("{cfg}_again.json"));
        bin().args(["diagnose", "--config"]).arg(configs().join(format!("{cfg}.toml"))).arg("--out").arg(&again).status().unwrap();
        assert_eq!(fs::read(&out).unwrap(), fs::read(&again).unwrap());
    }
}

#[test]
fn report_aggregates_and_refuses_mismatches() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(dir.path(), |s| s);
    let status = run(bin()
        .args(["report", "--spec"])
        .arg(&spec)
        .args(["--js", "4,9", "--layers", "1,2", "--seed", "3", "--out"])
        .arg(dir.path().join("rep")));
    assert_eq!(status, 0);
    let table = fs::read_to_string(dir.path().join("rep/table_l1.md")).unwrap();
    assert!(table.starts_with("| J | 1 layer | 2 layers |"));
    assert_eq!(table.lines().count(), 4);
    let noisy = dir.path().join("noisy");
    fs::create_dir(&noisy).unwrap();
    let other = small_spec(&noisy, |s| s.replace("noise_std = 0.02", "noise_std = 0.05"));
    assert_eq!(run(bin().args(["infer", "--spec"]).arg(&other).arg("--out").arg(noisy.join("out"))), 0);
    let same = dir.path().join("rep/desk_1d_J50_N2_J4_N1.json");
    let status = run(bin().args(["report", "--from"]).arg(&same).arg(noisy.join("out/summary.json")).arg("--out").arg(dir.path().join("agg")));
    assert_eq!(status, 2);
    let status = run(bin().args(["report", "--from"]).arg(&same).arg(dir.path().join("rep/desk_1d_J50_N2_J9_N2.json")).arg("--out").arg(dir.path().join("agg")));
    assert_eq!(status, 0);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.toml");
    fs::write(&junk, "x=").unwrap();
    assert_eq!(run(bin().args(["infer", "--spec"]).arg(&junk)), 2);
    assert_eq!(run(bin().args(["infer", "--spec"]).arg(dir.path().join("missing.toml"))), 2);

    let crime = dir.path().join("crime");
    fs::create_dir(&crime).unwrap();
    let spec = small_spec(&crime, |s| s.replace("generation_mesh = 40", "generation_mesh = 20"));
    assert_eq!(run(bin().args(["infer", "--spec"]).arg(&spec).arg("--out").arg(crime.join("o"))), 2);
    assert_eq!(run(bin().args(["infer", "--allow-inverse-crime", "--spec"]).arg(&spec).arg("--out").arg(crime.join("o"))), 0);

    // Repeated observations of one node with vanishing noise make the marginal covariance singular.
    let singular = dir.path().join("singular");
    fs::create_dir(&singular).unwrap();
    let spec = small_spec(&singular, |s| s.replace("noise_std = 0.02", "noise_std = 1e-200").replace("n_obs = 10", "n_obs = 30"));
    assert_eq!(run(bin().args(["infer", "--spec"]).arg(&spec).arg("--out").arg(singular.join("o"))), 3);
}
