//! Table encodings: header-only output, full-precision round trips and the
//! JSON schema.

use dshap_bench::output::{parse_csv, validate_json, Cell, Table};
use proptest::prelude::*;
use serde_json::json;

#[test]
fn empty_table_is_header_only() {
    let t = Table::new(&["index", "value"]);
    assert_eq!(t.to_csv().unwrap(), "index,value\n");
    let with_meta = Table::new(&["a"]).meta("seed", 3);
    assert_eq!(with_meta.to_csv().unwrap(), "# seed = 3\na\n");
}

#[test]
fn json_output_matches_schema() {
    let mut t = Table::new(&["ordering", "step", "utility_mean"]).meta("seed", 1);
    t.push(vec!["largest".into(), Cell::Int(0), Cell::Float(0.5)]).unwrap();
    t.push(vec!["random".into(), Cell::Int(1), Cell::Float(f64::NAN)]).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&t.to_json().unwrap()).unwrap();
    validate_json(&doc).unwrap();
    assert!(doc["rows"][1][2].is_null());
}

#[test]
fn schema_rejects_malformed_documents() {
    for bad in [
        json!([]),
        json!({"metadata": {}, "columns": ["a"]}),
        json!({"metadata": {}, "columns": ["a", "a"], "rows": []}),
        json!({"metadata": {}, "columns": ["a"], "rows": [[1, 2]]}),
        json!({"metadata": {}, "columns": ["a"], "rows": [[[1]]]}),
        json!({"metadata": 3, "columns": ["a"], "rows": []}),
    ] {
        assert!(validate_json(&bad).is_err(), "{bad}");
    }
}

#[test]
fn rendering_is_stable() {
    let mut t = Table::new(&["x"]).meta("k", "v");
    t.push(vec![Cell::Float(0.1 + 0.2)]).unwrap();
    assert_eq!(t.to_csv().unwrap(), t.clone().to_csv().unwrap());
    assert_eq!(t.to_csv().unwrap(), "# k = \"v\"\nx\n0.30000000000000004\n");
}

proptest! {
    #[test]
    fn floats_round_trip_exactly(values in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 0..40)) {
        let mut t = Table::new(&["i", "v"]);
        for (i, v) in values.iter().enumerate() {
            t.push(vec![Cell::Int(i as u64), Cell::Float(*v)]).unwrap();
        }
        let parsed = parse_csv(&t.to_csv().unwrap()).unwrap();
        let back = parsed.f64_column("v").unwrap();
        prop_assert_eq!(back.len(), values.len());
        for (a, b) in back.iter().zip(&values) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
        let doc: serde_json::Value = serde_json::from_str(&t.to_json().unwrap()).unwrap();
        for (row, v) in doc["rows"].as_array().unwrap().iter().zip(&values) {
            prop_assert_eq!(row[1].as_f64().unwrap().to_bits(), v.to_bits());
        }
    }
}
