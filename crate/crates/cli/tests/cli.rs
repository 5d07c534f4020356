use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use markloc::benchgen::{generate_case, CaseParams, Distribution};
use markloc::locator::LocatedMark;
use markloc::revis::MarkerType;
use markloc_cli::files::sha256_file;
use markloc_cli::formats::{Manifest, Method, Prediction, Truth};

fn markloc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_markloc"))
        .args(args)
        .output()
        .unwrap()
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn write_case(dir: &Path, name: &str, seed: u64) {
    let case = generate_case(
        MarkerType::FilledSquare,
        20,
        Distribution::UniformDisjoint { gap: 2.0 },
        CaseParams {
            width: 160,
            height: 160,
            ..CaseParams::default()
        },
        seed,
    )
    .unwrap();
    case.image
        .save_png(dir.join(format!("{name}.png")))
        .unwrap();
}

#[test]
fn locate_single_image_and_directory() {
    let dir = tempfile::tempdir().unwrap();
    let images = dir.path().join("images");
    fs::create_dir(&images).unwrap();
    for i in 0..9 {
        write_case(&images, &format!("img{i}"), i);
    }
    let one = dir.path().join("one");
    let out = markloc(&["locate", &s(&images.join("img3.png")), "--out", &s(&one)]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let files: Vec<_> = fs::read_dir(&one).unwrap().collect();
    assert_eq!(files.len(), 1);
    let pred: Prediction =
        serde_json::from_str(&fs::read_to_string(one.join("img3.json")).unwrap()).unwrap();
    assert_eq!(pred.image, "img3.png");
    assert_eq!(pred.method, Method::Osm);
    assert_eq!(pred.marks.len(), 20);
    assert!(pred.timing_ms.is_none());

    let all = dir.path().join("all");
    let overlays = dir.path().join("overlays");
    let out = markloc(&[
        "locate",
        &s(&images),
        "--out",
        &s(&all),
        "--overlay",
        &s(&overlays),
        "--timing",
        "--sequential",
    ]);
    assert!(out.status.success());
    assert_eq!(fs::read_dir(&all).unwrap().count(), 9);
    assert_eq!(fs::read_dir(&overlays).unwrap().count(), 9);
    let pred: Prediction =
        serde_json::from_str(&fs::read_to_string(all.join("img0.json")).unwrap()).unwrap();
    assert!(pred.timing_ms.is_some());
}

#[test]
fn bad_inputs_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = markloc(&[
        "locate",
        "/definitely/not/here.png",
        "--out",
        &s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let junk = dir.path().join("junk.png");
    fs::write(&junk, b"not a png").unwrap();
    let out = markloc(&["locate", &s(&junk), "--out", &s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    let out = markloc(&[
        "evaluate",
        "--pred",
        &s(dir.path()),
        "--truth",
        &s(dir.path()),
        "--out",
        &s(dir.path()),
        "--lambda",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn generate_counts_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        assert!(markloc(&["generate", "--preset", "desk", "--out", &s(d)])
            .status
            .success());
    }
    assert_eq!(
        sha256_file(&a.join("manifest.json")).unwrap(),
        sha256_file(&b.join("manifest.json")).unwrap()
    );
    let manifest: Manifest =
        serde_json::from_str(&fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.case_count, 33);
    assert_eq!(
        manifest
            .severity_histogram
            .iter()
            .map(|h| h.count)
            .sum::<usize>(),
        33
    );
    let case = &manifest.cases[4];
    assert_eq!(
        sha256_file(&a.join(&case.image)).unwrap(),
        case.image_sha256
    );

    let spec = dir.path().join("spec.json");
    fs::write(
        &spec,
        r#"{"markers": ["plus"], "counts": [100], "blobs_per_combo": 6, "hypercube_per_combo": 3}"#,
    )
    .unwrap();
    let c = dir.path().join("c");
    assert!(markloc(&["generate", "--spec", &s(&spec), "--out", &s(&c)])
        .status
        .success());
    assert_eq!(fs::read_dir(c.join("images")).unwrap().count(), 9);
}

#[test]
fn paper_preset_has_297_cases() {
    let dir = tempfile::tempdir().unwrap();
    let out = markloc(&["generate", "--preset", "paper", "--out", &s(dir.path())]);
    assert!(out.status.success());
    let manifest: Manifest =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest.case_count, 297);
    assert_eq!(fs::read_dir(dir.path().join("truth")).unwrap().count(), 297);
}

fn prediction_from(truth: &Truth, keep: bool) -> Prediction {
    Prediction {
        image: truth.image.clone(),
        method: Method::Osm,
        params: serde_json::Value::Null,
        marks: if keep {
            truth
                .marks
                .iter()
                .map(|m| LocatedMark {
                    x: m.center[0],
                    y: m.center[1],
                    radius: m.radius,
                    marker: m.marker,
                    region_id: None,
                })
                .collect()
        } else {
            Vec::new()
        },
        regions: Vec::new(),
        rsma: None,
        space_factor: None,
        timing_ms: None,
    }
}

#[test]
fn evaluate_perfect_and_empty_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let suite = dir.path().join("suite");
    assert!(
        markloc(&["generate", "--preset", "desk", "--out", &s(&suite)])
            .status
            .success()
    );
    for (name, keep) in [("perfect", true), ("empty", false)] {
        let pred = dir.path().join(name);
        fs::create_dir(&pred).unwrap();
        for entry in fs::read_dir(suite.join("truth")).unwrap() {
            let path = entry.unwrap().path();
            let truth: Truth = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
            let text = serde_json::to_string(&prediction_from(&truth, keep)).unwrap();
            fs::write(pred.join(path.file_name().unwrap()), text).unwrap();
        }
    }
    let out_dir = dir.path().join("eval_perfect");
    let out = markloc(&[
        "evaluate",
        "--pred",
        &s(&dir.path().join("perfect")),
        "--truth",
        &s(&suite),
        "--out",
        &s(&out_dir),
        "--assert-min",
        "1=0.999",
    ]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(
        stdout.contains("| osm | 33 | 1.000 ± 0.000 | 1.000 ± 0.000 | 1.000 ± 0.000 |"),
        "{stdout}"
    );
    let scores = fs::read_to_string(out_dir.join("scores.csv")).unwrap();
    assert_eq!(scores.lines().count(), 1 + 33 * 3);
    assert!(scores.lines().skip(1).all(|l| l.ends_with(",1.000000")));

    let out_dir = dir.path().join("eval_empty");
    let out = markloc(&[
        "evaluate",
        "--pred",
        &s(&dir.path().join("empty")),
        "--truth",
        &s(&suite.join("truth")),
        "--out",
        &s(&out_dir),
        "--lambda",
        "1",
        "--assert-min",
        "1=0.5",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let aggregate = fs::read_to_string(out_dir.join("aggregate.csv")).unwrap();
    assert_eq!(aggregate, "lambda,cases,mean,std\n1,33,0.000000,0.000000\n");
}

#[test]
fn sweeps_write_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let ab = dir.path().join("ab.csv");
    let out = markloc(&["sweep", "alpha-beta", "--out", &s(&ab)]);
    assert!(out.status.success());
    let text = fs::read_to_string(&ab).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 31 * 34);
    let correct = rows
        .iter()
        .filter(|r| r.split(',').nth(2) == Some("3"))
        .count();
    assert!(2 * correct > rows.len());
    let again = dir.path().join("ab2.csv");
    assert!(markloc(&["sweep", "alpha-beta", "--out", &s(&again)])
        .status
        .success());
    assert_eq!(fs::read(&ab).unwrap(), fs::read(&again).unwrap());

    let sa = dir.path().join("sa.csv");
    let out = markloc(&[
        "sweep",
        "sa-params",
        "--out",
        &s(&sa),
        "--gamma-s",
        "1.5",
        "--gamma-m",
        "1,1.5",
        "--runs",
        "3",
        "--regions",
        "2",
    ]);
    assert!(out.status.success());
    let text = fs::read_to_string(&sa).unwrap();
    assert!(text.starts_with(
        "gamma_s,gamma_m,hit_rate,worst_region_hit_rate,evaluation_ratio,sa_ms,exhaustive_ms\n"
    ));
    assert_eq!(text.lines().count(), 3);
}
