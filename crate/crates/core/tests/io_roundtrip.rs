//! Field dumps and CSV reports read back bit-for-bit.

use proptest::prelude::*;

use raddiff::field::{DirectionalField, ScalarField};
use raddiff::grid::PeriodicGrid;
use raddiff::io::{fmt_real, read_csv, read_field, write_csv, write_directional, write_scalar, CsvAppender};
use raddiff::kinetic::Diagnostics;

fn finite() -> impl Strategy<Value = f64> {
    prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn binary_fields_round_trip(values in prop::collection::vec(finite(), 24), t in 0.0f64..1.0, eps in 1e-3f64..0.999) {
        let dir = tempfile::tempdir().unwrap();
        let grid = PeriodicGrid::new([4, 3, 2], [1.0; 3]).unwrap();

        let s = ScalarField::from_vec(values.clone());
        let path = dir.path().join("theta.bin");
        write_scalar(&path, &grid, &s, t, eps).unwrap();
        let (hdr, back) = read_field(&path).unwrap();
        prop_assert_eq!(hdr.n, [4, 3, 2]);
        prop_assert_eq!(hdr.n_dirs, 0);
        prop_assert_eq!(hdr.time.to_bits(), t.to_bits());
        prop_assert_eq!(hdr.epsilon.to_bits(), eps.to_bits());
        prop_assert!(back.iter().zip(&values).all(|(a, b)| a.to_bits() == b.to_bits()));

        let mut doubled = values.clone();
        doubled.extend(values.iter().map(|v| -v));
        let f = DirectionalField::from_vec(2, 24, doubled.clone()).unwrap();
        let path = dir.path().join("f.bin");
        write_directional(&path, &grid, &f, t, eps).unwrap();
        let (hdr, back) = read_field(&path).unwrap();
        prop_assert_eq!(hdr.n_dirs, 2);
        prop_assert!(back.iter().zip(&doubled).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn csv_numbers_round_trip(row in prop::array::uniform6(finite())) {
        let dir = tempfile::tempdir().unwrap();
        let d = Diagnostics { t: row[0], energy: row[1], theta_min: row[2], theta_max: row[3], f_min: row[4], f_max: row[5] };
        let path = dir.path().join("diag.csv");
        write_csv(&path, &[d]).unwrap();
        let (header, rows) = read_csv(&path).unwrap();
        prop_assert_eq!(header, vec!["t", "energy", "theta_min", "theta_max", "f_min", "f_max"]);
        let parsed: Vec<f64> = rows[0].iter().map(|s| s.parse().unwrap()).collect();
        prop_assert!(parsed.iter().zip(&row).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}

#[test]
fn appender_matches_batch_writer() {
    let dir = tempfile::tempdir().unwrap();
    let rows: Vec<Diagnostics> = (0..5)
        .map(|k| {
            let x = k as f64 / 7.0;
            Diagnostics {
                t: x,
                energy: 1.0 + x,
                theta_min: x * x,
                theta_max: 2.0,
                f_min: 0.0,
                f_max: 1.0 / 3.0,
            }
        })
        .collect();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    write_csv(&a, &rows).unwrap();
    let mut app = CsvAppender::create(&b).unwrap();
    for r in &rows {
        app.push(r).unwrap();
    }
    app.finish().unwrap();
    assert_eq!(std::fs::read_to_string(a).unwrap(), std::fs::read_to_string(b).unwrap());
}

#[test]
fn truncated_dump_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let grid = PeriodicGrid::slab(8).unwrap();
    let path = dir.path().join("theta.bin");
    write_scalar(&path, &grid, &ScalarField::constant(8, 1.5), 0.0, 0.1).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
    assert!(read_field(&path).is_err());
    assert_eq!(fmt_real(0.1).parse::<f64>().unwrap(), 0.1);
}
