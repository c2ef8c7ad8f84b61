#![allow(dead_code)]

use serde_json::Value;
use weylhom::geometry::{metric_at, MetricParams};

/// Richardson-extrapolated central difference of a vector-valued function.
pub fn richardson<F: Fn(f64) -> Vec<f64>>(f: F, h: f64) -> Vec<f64> {
    let d = |h: f64| -> Vec<f64> {
        let (p, m) = (f(h), f(-h));
        p.iter().zip(&m).map(|(a, b)| (a - b) / (2.0 * h)).collect()
    };
    let (d1, d2) = (d(h), d(h / 2.0));
    d1.iter().zip(&d2).map(|(a, b)| (4.0 * b - a) / 3.0).collect()
}

fn shifted(point: &[f64], a: usize, t: f64) -> Vec<f64> {
    let mut q = point.to_vec();
    q[a] += t;
    q
}

/// `Γ^k_ij` at `point` from finite differences of the metric alone, stored as
/// `[(k·n + i)·n + j]`.
pub fn fd_christoffel(p: &MetricParams, point: &[f64], h: f64) -> Vec<f64> {
    let n = p.n;
    let g = metric_at(p, point).unwrap();
    let ginv = g.clone().try_inverse().unwrap();
    // dg[a][(b, c)] = ∂_a g_bc
    let dg: Vec<Vec<f64>> = (0..n)
        .map(|a| richardson(|t| metric_at(p, &shifted(point, a, t)).unwrap().as_slice().to_vec(), h))
        .collect();
    let d = |a: usize, b: usize, c: usize| dg[a][b + c * n];
    let mut out = vec![0.0; n * n * n];
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                out[(k * n + i) * n + j] = (0..n)
                    .map(|l| 0.5 * ginv[(k, l)] * (d(i, l, j) + d(j, l, i) - d(l, i, j)))
                    .sum();
            }
        }
    }
    out
}

/// `R(∂a, ∂b, ∂c, ∂d) = ⟨R(∂a, ∂b)∂c, ∂d⟩` with `R(X,Y) = ∇_X∇_Y − ∇_Y∇_X − ∇_[X,Y]`,
/// from nested finite differences of the metric.
pub fn fd_riemann(p: &MetricParams, point: &[f64], h_outer: f64, h_inner: f64) -> Vec<f64> {
    let n = p.n;
    let g = metric_at(p, point).unwrap();
    let gam = fd_christoffel(p, point, h_inner);
    let dgam: Vec<Vec<f64>> = (0..n)
        .map(|a| richardson(|t| fd_christoffel(p, &shifted(point, a, t), h_inner), h_outer))
        .collect();
    let gm = |k: usize, i: usize, j: usize| gam[(k * n + i) * n + j];
    let dgm = |a: usize, k: usize, i: usize, j: usize| dgam[a][(k * n + i) * n + j];
    let mut out = vec![0.0; n * n * n * n];
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                // R^e_abc
                let up: Vec<f64> = (0..n)
                    .map(|e| {
                        let mut v = dgm(a, e, b, c) - dgm(b, e, a, c);
                        for f in 0..n {
                            v += gm(e, a, f) * gm(f, b, c) - gm(e, b, f) * gm(f, a, c);
                        }
                        v
                    })
                    .collect();
                for d in 0..n {
                    out[((a * n + b) * n + c) * n + d] = (0..n).map(|e| g[(d, e)] * up[e]).sum();
                }
            }
        }
    }
    out
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Minimal JSON-Schema checker covering the keywords used by the report
/// schema: type, const, enum, required, properties, items, minimum, maximum,
/// oneOf, allOf, if/then and local `$ref`.
pub fn validate(instance: &Value, schema: &Value) -> Result<(), String> {
    check(instance, schema, schema, "$")
}

fn type_ok(v: &Value, t: &str) -> bool {
    match t {
        "object" => v.is_object(),
        "array" => v.is_array(),
        "string" => v.is_string(),
        "number" => v.is_number(),
        "integer" => v.is_i64() || v.is_u64(),
        "boolean" => v.is_boolean(),
        "null" => v.is_null(),
        _ => false,
    }
}

fn resolve<'a>(root: &'a Value, r: &str) -> &'a Value {
    let path = r.strip_prefix("#/").expect("local reference");
    path.split('/').fold(root, |acc, key| &acc[key])
}

fn check(v: &Value, s: &Value, root: &Value, at: &str) -> Result<(), String> {
    if let Some(r) = s.get("$ref").and_then(Value::as_str) {
        check(v, resolve(root, r), root, at)?;
    }
    if let Some(t) = s.get("type") {
        let ok = match t {
            Value::String(t) => type_ok(v, t),
            Value::Array(ts) => ts.iter().filter_map(Value::as_str).any(|t| type_ok(v, t)),
            _ => true,
        };
        if !ok {
            return Err(format!("{at}: expected type {t}, got {v}"));
        }
    }
    if let Some(c) = s.get("const") {
        if v != c {
            return Err(format!("{at}: expected {c}, got {v}"));
        }
    }
    if let Some(Value::Array(options)) = s.get("enum") {
        if !options.contains(v) {
            return Err(format!("{at}: {v} not in {options:?}"));
        }
    }
    if let Some(x) = v.as_f64() {
        if let Some(m) = s.get("minimum").and_then(Value::as_f64) {
            if x < m {
                return Err(format!("{at}: {x} < {m}"));
            }
        }
        if let Some(m) = s.get("maximum").and_then(Value::as_f64) {
            if x > m {
                return Err(format!("{at}: {x} > {m}"));
            }
        }
    }
    if let Value::Object(map) = v {
        if let Some(Value::Array(req)) = s.get("required") {
            for k in req.iter().filter_map(Value::as_str) {
                if !map.contains_key(k) {
                    return Err(format!("{at}: missing {k}"));
                }
            }
        }
        if let Some(Value::Object(props)) = s.get("properties") {
            for (k, sub) in props {
                if let Some(x) = map.get(k) {
                    check(x, sub, root, &format!("{at}.{k}"))?;
                }
            }
        }
    }
    if let (Value::Array(items), Some(sub)) = (v, s.get("items")) {
        for (i, x) in items.iter().enumerate() {
            check(x, sub, root, &format!("{at}[{i}]"))?;
        }
    }
    if let Some(Value::Array(all)) = s.get("allOf") {
        for sub in all {
            check(v, sub, root, at)?;
        }
    }
    if let Some(Value::Array(one)) = s.get("oneOf") {
        let hits = one.iter().filter(|sub| check(v, sub, root, at).is_ok()).count();
        if hits != 1 {
            return Err(format!("{at}: {hits} oneOf branches match"));
        }
    }
    if let (Some(cond), Some(then)) = (s.get("if"), s.get("then")) {
        if check(v, cond, root, at).is_ok() {
            check(v, then, root, at)?;
        }
    }
    Ok(())
}

pub fn report_schema() -> Value {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../schemas/report.schema.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}
