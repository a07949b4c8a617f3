use std::path::Path;
use std::process::Command;

use wigner_smith::config::ExperimentInfo;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wigner-smith"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn moments_config(out: &Path, extra_sim: &str) -> String {
    format!(
        r#"{{"experiment":"moments",
            "model":{{"n_channels":1,"beta":1,"k":1.0,"sigma":8.0}},
            "sim":{{"n_traj":200,"dx":1e-2{extra_sim}}},
            "output":{{"dir":{:?}}},
            "settings":{{"lengths":[1.0]}}}}"#,
        out.to_str().unwrap()
    )
}

fn code(cmd: &mut Command) -> (i32, String) {
    let o = cmd.output().unwrap();
    (o.status.code().unwrap(), String::from_utf8_lossy(&o.stdout).into_owned())
}

#[test]
fn list_prints_every_experiment_with_its_module() {
    let (c, out) = code(bin().arg("list"));
    assert_eq!(c, 0);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 8);
    for (l, m) in lines.iter().zip(["noise", "moments", "rmt", "sde", "sde", "sde", "microscopic", "resolvent"]) {
        assert!(l.split_whitespace().nth(1) == Some(m), "{l}");
    }
}

#[test]
fn list_json_round_trips() {
    let (c, out) = code(bin().args(["list", "--json"]));
    assert_eq!(c, 0);
    let infos: Vec<ExperimentInfo> = serde_json::from_str(&out).unwrap();
    assert_eq!(infos.len(), 8);
    assert_eq!(serde_json::from_str::<Vec<ExperimentInfo>>(&serde_json::to_string(&infos).unwrap()).unwrap(), infos);
}

#[test]
fn single_channel_moments_row() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = write_config(tmp.path(), "m.json", &moments_config(&out, ""));
    let (c, _) = code(bin().arg("run").arg(&cfg));
    assert!(c == 0 || c == 1);
    let text = std::fs::read_to_string(out.join("moments.csv")).unwrap();
    let row = text.lines().find(|l| l.contains(",sq_tr,")).unwrap();
    let closed: f64 = row.split(',').nth(4).unwrap().parse().unwrap();
    // N = 1, L = ξ: (e⁴ − 5)/2
    assert!((closed - (4f64.exp() - 5.0) / 2.0).abs() < 1e-9);
}

#[test]
fn worker_count_and_reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for (i, w) in ["1", "2", "1"].iter().enumerate() {
        let out = tmp.path().join(format!("o{i}"));
        let cfg = write_config(tmp.path(), &format!("c{i}.json"), &moments_config(&out, ""));
        code(bin().arg("run").arg(&cfg).args(["--workers", w]));
        let mut files: Vec<_> = std::fs::read_dir(&out)
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.file_name().unwrap() != "manifest.json")
            .map(|p| (p.file_name().unwrap().to_owned(), std::fs::read(p).unwrap()))
            .collect();
        files.sort();
        outputs.push(files);
    }
    assert!(outputs[0].len() >= 3);
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}

#[test]
fn overrides_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "m.json", &moments_config(&tmp.path().join("ignored"), ""));
    let out = tmp.path().join("elsewhere");
    code(bin().arg("run").arg(&cfg).args(["--seed", "77", "--out"]).arg(&out));
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["master_seed"], 77);
    assert_eq!(m["config"]["sim"]["master_seed"], 77);
    assert_eq!(m["version"], env!("CARGO_PKG_VERSION"));
    assert!(m["wall_time_s"].as_f64().unwrap() >= 0.0);
    assert_eq!(m["config"]["sim"]["dx"], 1e-2);
    assert!(!tmp.path().join("ignored").exists());

    let other = tmp.path().join("seed78");
    code(bin().arg("run").arg(&cfg).args(["--seed", "78", "--out"]).arg(&other));
    assert_ne!(std::fs::read(out.join("moments.csv")).unwrap(), std::fs::read(other.join("moments.csv")).unwrap());
}

#[test]
fn exit_code_contract() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");

    let unknown = write_config(tmp.path(), "u.json", &moments_config(&out, r#","typo":1"#));
    assert_eq!(code(bin().arg("run").arg(&unknown)).0, 2);
    let bad_settings = write_config(
        tmp.path(),
        "b.json",
        &moments_config(&out, "").replace(r#""lengths":[1.0]"#, r#""lengths":[1.0],"extra":true"#),
    );
    assert_eq!(code(bin().arg("run").arg(&bad_settings)).0, 2);
    assert_eq!(code(bin().arg("run").arg(tmp.path().join("missing.json"))).0, 2);
    assert_eq!(code(bin().arg("bogus")).0, 2);

    let noise = |tol: f64| {
        format!(
            r#"{{"experiment":"noise-check","model":{{"n_channels":2,"beta":2,"k":1,"sigma":8}},
                "sim":{{"n_traj":5000}},"output":{{"dir":{:?}}},"settings":{{"z_tol":{tol}}}}}"#,
            out.to_str().unwrap()
        )
    };
    assert_eq!(code(bin().arg("run").arg(write_config(tmp.path(), "n0.json", &noise(10.0)))).0, 0);
    assert_eq!(code(bin().arg("run").arg(write_config(tmp.path(), "n1.json", &noise(1e-6)))).0, 1);

    let overflow = moments_config(&out, "").replace(r#""lengths":[1.0]"#, r#""lengths":[600.0]"#);
    assert_eq!(code(bin().arg("run").arg(write_config(tmp.path(), "x.json", &overflow))).0, 3);
}

#[test]
fn json_only_output_writes_no_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let body = moments_config(&out, "").replace(r#""output":{"dir":"#, r#""output":{"formats":["json"],"dir":"#);
    code(bin().arg("run").arg(write_config(tmp.path(), "j.json", &body)));
    let mut names: Vec<String> =
        std::fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    names.sort();
    assert_eq!(names, ["manifest.json", "summary.json"]);
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut kinds = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        let cfg = wigner_smith::config::ExperimentConfig::load(&p).unwrap();
        assert_eq!(format!("{}.json", cfg.experiment.name()), p.file_name().unwrap().to_string_lossy());
        kinds.push(cfg.experiment);
    }
    assert_eq!(kinds.len(), 8);
}
