mod common;

use std::io::Write;

use bnngp::data::*;
use bnngp::{Error, Matrix};
use common::normals;

#[test]
fn csv_round_trip_is_exact() {
    let mut g = normals(1);
    let x = g.matrix(10, 3).map(|v| v * 1e3);
    let y = g.matrix(10, 1).map(|v| v / 7.0);
    let d = Dataset::new(x, y).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("d.csv");
    save_csv(&p, &d).unwrap();
    let back = load_csv(&p).unwrap();
    assert_eq!((back.x.cols(), back.y.cols()), (3, 1));
    assert_eq!(back.x, d.x);
    assert_eq!(back.y, d.y);
}

fn write(dir: &tempfile::TempDir, body: &str) -> std::path::PathBuf {
    let p = dir.path().join("f.csv");
    std::fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
    p
}

#[test]
fn schema_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(&dir, "# comment\nid,x_0,x_1,y_0,x_2\n7,1,2,3,4\n8,5,6,7,8\n");
    let d = load_csv(&p).unwrap();
    assert_eq!((d.x.cols(), d.y.cols(), d.len()), (3, 1, 2));
    assert_eq!(d.x.row(1), &[5.0, 6.0, 8.0]);

    let p = write(&dir, "x_0,y_0\n1,2\n3\n");
    match load_csv(&p) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
    let p = write(&dir, "x_0,y_0\n1,2\n3,abc\n");
    assert!(matches!(load_csv(&p), Err(Error::Parse { line: 3, .. })));
    let p = write(&dir, "");
    assert!(matches!(load_csv(&p), Err(Error::Parse { .. })));
    let p = write(&dir, "a,b\n1,2\n");
    assert!(matches!(load_csv(&p), Err(Error::Parse { line: 1, .. })));
    assert!(matches!(load_csv(dir.path().join("missing.csv")), Err(Error::Io(_))));
}

#[test]
fn rings_geometry() {
    let d = generate_rings();
    let dist = |i: usize, j: usize| (0..3).map(|k| (d.x[(i, k)] - d.x[(j, k)]).powi(2)).sum::<f64>().sqrt();
    let min = (0..60).flat_map(|i| (60..120).map(move |j| (i, j))).map(|(i, j)| dist(i, j)).fold(f64::INFINITY, f64::min);
    assert!(min > 0.0);
    for i in 60..120 {
        let r = d.x.row(i);
        assert!(((r[1] - 1.0).powi(2) + r[2].powi(2) - 1.0).abs() < 1e-12);
        assert!((-0.5..=0.5).contains(&r[0]));
    }
    assert_eq!((0..60).filter(|&i| d.y[(i, 0)] == 0.0).count(), 60);
}

#[test]
fn standardization_properties() {
    let raw = generate_rings();
    let s = standardize(&raw).unwrap();
    for m in [&s.x, &s.y] {
        for j in 0..m.cols() {
            let c = m.col(j);
            let mean = c.iter().sum::<f64>() / c.len() as f64;
            let sd = (c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / c.len() as f64).sqrt();
            assert!(mean.abs() < 1e-10 && (sd - 1.0).abs() < 1e-10);
        }
    }
    let twice = standardize(&s).unwrap();
    assert!(twice.x.data().iter().zip(s.x.data()).all(|(a, b)| (a - b).abs() < 1e-12));
    let back = unstandardize(&twice);
    assert!(back.x.data().iter().zip(raw.x.data()).all(|(a, b)| (a - b).abs() < 1e-12));
    assert!(back.y.data().iter().zip(raw.y.data()).all(|(a, b)| (a - b).abs() < 1e-12));
    let one = Dataset::new(Matrix::from_rows(&[[1.0]]), Matrix::from_rows(&[[1.0]])).unwrap();
    assert!(standardize(&one).is_err());
}

#[test]
fn result_table_layout() {
    let mut t = ResultTable::new(&["a", "b"]);
    t.config("seed", 3).config("mode", "x");
    t.push(vec!["1".into(), fmt_num(0.1)]);
    let mut buf = Vec::new();
    t.write_to(&mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), "# seed = 3\n# mode = x\na,b\n1,0.1\n");
}
