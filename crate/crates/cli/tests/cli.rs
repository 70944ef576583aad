use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn deepmgp(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deepmgp"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn karate() -> String {
    format!("{}/../core/data/karate.metis", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn partition_then_verify() {
    let dir = tempfile::tempdir().unwrap();
    let g = "gen:rgg2d:n=3000,deg=8,seed=4";
    let o = deepmgp(&["partition", g, "-k", "8", "-P", "4", "--seed", "1", "-o", "out.part"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("feasible=true"));
    let o = deepmgp(&["verify", g, "out.part", "-k", "8", "--epsilon", "0.03"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let line = stdout(&o);
    assert!(line.starts_with("cut="), "{line}");
    // same seed, same output file
    let first = fs::read(dir.path().join("out.part")).unwrap();
    deepmgp(&["partition", g, "-k", "8", "-P", "4", "--seed", "1", "-o", "again.part"], dir.path());
    assert_eq!(first, fs::read(dir.path().join("again.part")).unwrap());
}

#[test]
fn verify_rejects_an_overloaded_partition() {
    let dir = tempfile::tempdir().unwrap();
    // everything in block 0 of 2
    fs::write(dir.path().join("bad.part"), "0\n".repeat(34)).unwrap();
    let o = deepmgp(&["verify", &karate(), "bad.part", "-k", "2", "--epsilon", "0.03"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("cut=0"));
    assert!(stdout(&o).contains("feasible=false"));
    // wrong length is an error, not a verdict
    fs::write(dir.path().join("short.part"), "0\n1\n").unwrap();
    let o = deepmgp(&["verify", &karate(), "short.part", "-k", "2"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sequential_and_parallel_execution_agree() {
    let dir = tempfile::tempdir().unwrap();
    let k = karate();
    for exec in ["parallel", "sequential"] {
        let o = deepmgp(&["partition", &k, "-k", "4", "-P", "2", "--exec", exec, "-o", &format!("{exec}.part")], dir.path());
        assert!(o.status.success());
    }
    assert_eq!(fs::read(dir.path().join("parallel.part")).unwrap(), fs::read(dir.path().join("sequential.part")).unwrap());
}

#[test]
fn generate_writes_metis() {
    let dir = tempfile::tempdir().unwrap();
    let o = deepmgp(&["generate", "gen:plaw:n=500,deg=6,gamma=3,seed=2", "-o", "g.metis"], dir.path());
    assert!(o.status.success());
    let o = deepmgp(&["partition", "g.metis", "-k", "4", "-o", "g.part"], dir.path());
    assert!(o.status.success());
    let o = deepmgp(&["verify", "g.metis", "g.part", "-k", "4"], dir.path());
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn bad_input_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let o = deepmgp(&["partition", "gen:rgg2d:n=100,deg=4", "-k", "2", "-P", "3", "-o", "x.part"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("power of two"));
    let o = deepmgp(&["partition", "missing.metis", "-k", "2", "-o", "x.part"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bench_profile_and_scaling() {
    let dir = tempfile::tempdir().unwrap();
    let grid = format!(
        "graphs = ['{}', 'gen:rgg2d:n=1500,deg=8,seed=1']\nk = [2, 4]\npes = [1, 4]\nseeds = [0, 1]\nmodes = ['grid', 'direct']\n",
        karate()
    );
    fs::write(dir.path().join("grid.toml"), grid).unwrap();
    let o = deepmgp(&["bench", "--grid", "grid.toml", "-o", "r1.csv"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("32 runs, 0 failed, 0 infeasible"));
    let o = deepmgp(&["bench", "--grid", "grid.toml", "-o", "r2.csv", "--parts-dir", "parts"], dir.path());
    assert!(o.status.success());
    let r1 = fs::read(dir.path().join("r1.csv")).unwrap();
    assert_eq!(r1, fs::read(dir.path().join("r2.csv")).unwrap(), "results are byte-stable");
    assert_eq!(fs::read_dir(dir.path().join("parts")).unwrap().count(), 32);
    let text = String::from_utf8(r1).unwrap();
    assert!(text.starts_with("graph,n,m,k,pes,seed,preset,mode,algorithm,status,cut,imbalance,feasible"));
    assert_eq!(text.lines().count(), 33);

    let o = deepmgp(&["profile", "r1.csv", "-o", "profile.csv"], dir.path());
    assert!(o.status.success());
    let profile = fs::read_to_string(dir.path().join("profile.csv")).unwrap();
    assert!(profile.starts_with("tau,fast-p1,fast-p1-direct,fast-p4,fast-p4-direct\n1.00,"));
    // every algorithm is within factor 10 of the best everywhere
    let last = profile.lines().last().unwrap();
    assert!(last.starts_with("10.00,") && last.split(',').skip(1).all(|f| f == "1.000000"), "{last}");

    let o = deepmgp(&["scaling", "r1.csv", "-o", "scaling.csv"], dir.path());
    assert!(o.status.success());
    let scaling = fs::read_to_string(dir.path().join("scaling.csv")).unwrap();
    assert_eq!(scaling.lines().count(), 9);
}
