use std::path::PathBuf;

use fairshift::data::*;
use proptest::prelude::*;

fn data_dir() -> PathBuf {
    std::env::var_os("FAIRSHIFT_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data"))
}

fn compas_raw() -> Option<RawTable> {
    let path = data_dir().join("compas-scores-two-years.csv");
    if !path.exists() {
        eprintln!("skipping: {} not found", path.display());
        return None;
    }
    Some(RawTable::load(&path).unwrap())
}

/// Row count of the ProPublica filter, computed straight from the csv
/// records without the library's table type.
fn filtered_count_oracle(path: &std::path::Path) -> usize {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let at = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let (days, recid, degree, score) = (
        at("days_b_screening_arrest"),
        at("is_recid"),
        at("c_charge_degree"),
        at("score_text"),
    );
    rdr.records()
        .map(|r| r.unwrap())
        .filter(|r| {
            let Ok(d) = r[days].parse::<i64>() else { return false };
            (-30..=30).contains(&d) && &r[recid] != "-1" && &r[degree] != "O" && &r[score] != "N/A"
        })
        .count()
}

#[test]
fn compas_recipe_on_real_file() {
    let Some(raw) = compas_raw() else { return };
    let ds = preprocess_compas(&raw).unwrap();
    ds.validate().unwrap();
    assert_eq!(ds.n_rows(), filtered_count_oracle(&data_dir().join("compas-scores-two-years.csv")));
    assert_eq!(ds.n_rows(), 6172);
    let meta = |name: &str| ds.columns()[ds.column_index(name).unwrap()].clone();
    assert!((meta("priors_count").mean - 3.2).abs() <= 0.2, "{}", meta("priors_count").mean);
    assert!((meta("age").mean - 34.5).abs() <= 0.2, "{}", meta("age").mean);
    assert_eq!(meta("sex_male").kind, ColumnKind::Binary);

    // African-American defendants are the protected group.
    let race = raw.column("race").unwrap();
    let black = raw.rows.iter().filter(|r| r[race] == "African-American").count();
    let protected = ds.sensitive().iter().filter(|&&a| a == 0).count();
    assert!(protected > 0 && protected <= black);
}

fn write(dir: &tempfile::TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn roles(pairs: &[(&str, ColumnRole)]) -> Schema {
    Schema::from_roles(pairs.iter().map(|(n, r)| (n.to_string(), *r)))
}

#[test]
fn load_csv_statistics_and_kinds() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(&dir, "t.csv", "a,b,y,s\n1.0,0,1,0\n2.0,1,0,0\n3.0,1,1,1\n4.0,0,0,1\n");
    let schema = roles(&[
        ("a", ColumnRole::Feature),
        ("b", ColumnRole::Feature),
        ("y", ColumnRole::Label),
        ("s", ColumnRole::Sensitive),
    ]);
    let ds = load_csv(&p, &schema).unwrap();
    let a = &ds.columns()[0];
    assert_eq!(a.mean, 2.5);
    assert!((a.std_dev - 1.25f64.sqrt()).abs() < 1e-15);
    assert_eq!(a.kind, ColumnKind::Numeric);
    assert_eq!(ds.columns()[1].kind, ColumnKind::Binary);
    assert_eq!(ds.labels(), &[1, 0, 1, 0]);
    assert_eq!(ds.sensitive(), &[0, 0, 1, 1]);

    let bad = write(&dir, "bad.csv", "a,b,y,s\n1.0,0,2,0\n");
    assert!(load_csv(&bad, &schema).is_err());
    assert!(load_csv(&dir.path().join("none.csv"), &schema).is_err());
}

fn communities_fixture(sizes: &[usize]) -> RawTable {
    let headers: Vec<String> = COMMUNITIES_COLUMNS.iter().map(|s| s.to_string()).collect();
    let at = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let mut rows = Vec::new();
    for (s, &n) in sizes.iter().enumerate() {
        for i in 0..n {
            let mut row: Vec<String> = (0..headers.len())
                .map(|j| format!("{:.2}", ((i * 31 + j * 7 + s) % 100) as f64 / 100.0))
                .collect();
            row[at("state")] = (s + 1).to_string();
            row[at("communityname")] = format!("c{s}-{i}");
            row[at("county")] = "?".into();
            row[at("community")] = "?".into();
            row[at("ViolentCrimesPerPop")] = format!("{:.3}", ((i * 17) % n) as f64 / n as f64);
            // Black share ranks 2nd on even rows, 3rd on odd rows.
            let (w, b, h, a) = if i % 2 == 0 { (0.6, 0.3, 0.08, 0.02) } else { (0.6, 0.1, 0.2, 0.1) };
            row[at("racePctWhite")] = w.to_string();
            row[at("racepctblack")] = b.to_string();
            row[at("racePctHisp")] = h.to_string();
            row[at("racePctAsian")] = a.to_string();
            rows.push(row);
        }
    }
    RawTable { headers, rows }
}

#[test]
fn communities_recipe_on_fixture() {
    let tc = preprocess_communities(&communities_fixture(&[25, 19, 20, 31])).unwrap();
    assert_eq!(tc.len(), 3);
    for task in tc.tasks() {
        task.dataset.validate().unwrap();
        let n = task.dataset.n_rows();
        let mean = task.dataset.labels().iter().map(|&y| f64::from(y)).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() <= 1.0 / (2.0 * n as f64) + 1e-12, "{} {mean}", task.id);
        for (i, &a) in task.dataset.sensitive().iter().enumerate() {
            assert_eq!(a, u8::from(i % 2 == 1));
        }
        let names = task.dataset.column_names();
        for dropped in ["state", "county", "communityname", "ViolentCrimesPerPop", "racepctblack"] {
            assert!(!names.iter().any(|n| n == dropped), "{dropped} kept");
        }
    }
}

#[test]
fn communities_missing_columns_reported() {
    let mut raw = communities_fixture(&[20]);
    let j = raw.column("racepctblack").unwrap();
    raw.headers[j] = "renamed".into();
    assert!(preprocess_communities(&raw).is_err());
}

#[test]
fn communities_real_file_has_thirty_states() {
    let path = data_dir().join("communities.data");
    if !path.exists() {
        eprintln!("skipping: {} not found", path.display());
        return;
    }
    let raw = RawTable::load_headerless(&path, &COMMUNITIES_COLUMNS).unwrap();
    assert_eq!(preprocess_communities(&raw).unwrap().len(), 30);
}

#[test]
fn split_examples() {
    let ds = fixture_dataset(10);
    let (a, b) = split(&ds, 0.2, 7).unwrap();
    assert_eq!((a.n_rows(), b.n_rows()), (8, 2));
    assert_eq!(split_indices(10, 0.2, 7).unwrap(), split_indices(10, 0.2, 7).unwrap());
    assert!(split(&ds, 0.999, 7).is_err());
}

fn fixture_dataset(n: usize) -> Dataset {
    let x = ndarray::Array2::from_shape_fn((n, 2), |(i, j)| (i * (j + 1)) as f64);
    Dataset::new(
        x,
        (0..n).map(|i| (i % 2) as u8).collect(),
        (0..n).map(|i| u8::from(i % 3 == 0)).collect(),
        vec!["a".into(), "b".into()],
    )
    .unwrap()
}

proptest! {
    #[test]
    fn split_partitions_rows(n in 2usize..80, fraction in 0.05f64..0.95, seed in any::<u64>()) {
        let ds = fixture_dataset(n);
        if let Ok((train, test)) = split(&ds, fraction, seed) {
            train.validate().unwrap();
            test.validate().unwrap();
            let mut rows: Vec<u64> = train.features().column(0).iter().chain(test.features().column(0).iter())
                .map(|&v| v as u64).collect();
            rows.sort_unstable();
            prop_assert_eq!(rows, (0..n as u64).collect::<Vec<_>>());
            let mean = test.features().column(0).mean().unwrap();
            prop_assert!((test.columns()[0].mean - mean).abs() < 1e-9);
        }
    }
}
