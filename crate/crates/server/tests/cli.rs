use std::path::Path;
use std::process::Command;

fn seqlod(dir: &Path, args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_seqlod"))
        .args(args)
        .current_dir(dir)
        .env_remove("SEQLOD_CONFIG")
        .output()
        .unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn synth_build_overview_recommend() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    seqlod(d, &["synth", "--kind", "icu", "--seed", "4", "--out", "data"]);
    std::fs::write(d.join("filters.json"), r#"[{"kind": "event_occurrence", "op": "=", "value": "dialysis"}]"#).unwrap();
    let id = seqlod(
        d,
        &["build", "--events", "data/events.csv", "--attrs", "data/attributes.csv", "--filters", "filters.json", "--out", "cache"],
    );
    let id = id.trim();
    assert_eq!(id.len(), 16);
    assert!(d.join("cache").join(id).join("manifest.json").exists());

    let json = seqlod(d, &["overview", "--cache", "cache", "--k", "4", "--itau", "0.5"]);
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["k"], 4);
    assert_eq!(v["n_sequences"], 1311);
    assert_eq!(v["api_version"], "1.0");
    // a second run reads the cached tree and prints the same bytes
    assert_eq!(json, seqlod(d, &["overview", "--cache", "cache", "--k", "4", "--itau", "0.5"]));

    let svg = seqlod(d, &["overview", "--cache", "cache", "--dataset", id, "--k", "3", "--format", "svg-skeleton"]);
    assert!(svg.starts_with("<svg"));
    assert_eq!(svg.matches("class=\"cluster").count(), 3);

    let recs = seqlod(d, &["recommend", "--cache", "cache"]);
    let mut lines = recs.lines();
    assert_eq!(lines.next(), Some("k,avg_silhouette_width"));
    assert!(lines.count() >= 1);
    let curve = seqlod(d, &["recommend", "--cache", "cache", "--csv"]);
    assert_eq!(curve.lines().count(), 1311 - 2 + 1);

    let sig = std::fs::read_dir(d.join("cache").join(id).join("filters"))
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path();
    let sig = sig.file_stem().unwrap().to_str().unwrap();
    let filtered = seqlod(d, &["overview", "--cache", "cache", "--k", "1", "--filters-sig", sig]);
    let v: serde_json::Value = serde_json::from_str(&filtered).unwrap();
    assert!(v["total_records"].as_u64().unwrap() < 1425);
    assert_eq!(v["filter_signature"], sig);
}
