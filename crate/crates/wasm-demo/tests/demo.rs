use fmip_wasm_demo::demo::{self, GuidanceDemo};
use serde_json::Value;

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn generate_renders_lp() {
    let v = parse(demo::generate("comb-auction", 5, 3, 0.2).unwrap());
    assert_eq!(v["num_vars"], 10);
    assert!(v["num_int"].as_u64().unwrap() < 10);
    assert!(v["lp"].as_str().unwrap().contains("Subject To"));
    assert!(demo::generate("knapsack", 5, 0, 0.0).unwrap_err().contains("knapsack"));
    assert!(demo::generate("set-cover", 1, 0, 0.0).is_err());
}

#[test]
fn solvers_agree() {
    for family in ["set-cover", "indep-set", "comb-auction"] {
        let v = parse(demo::solve(family, 8, 1, 0.0, 10.0).unwrap());
        assert_eq!(v["bnb"]["status"], "optimal", "{v}");
        let (a, b) = (v["bnb"]["objective"].as_f64().unwrap(), v["brute"]["objective"].as_f64().unwrap());
        assert!((a - b).abs() < 1e-6, "{family}: {a} vs {b}");
    }
    let v = parse(demo::solve("indep-set", 30, 0, 0.0, 10.0).unwrap());
    assert_eq!(v["brute"]["status"], "error");
    assert!(v["brute"]["objective"].is_null());
}

#[test]
fn guidance_demo_reports_both_pools() {
    let opts = GuidanceDemo {
        epochs: 5,
        candidates: 6,
        steps: 4,
        ..Default::default()
    };
    let v = parse(demo::guidance(&opts).unwrap());
    assert_eq!(v["losses"].as_array().unwrap().len(), 5);
    assert_eq!(v["guided"]["total"], 6);
    assert_eq!(v["unguided"]["total"], 6);
    assert!(v["bks"].is_number());
    assert!(v["predict_and_search"]["status"].is_string());
}
