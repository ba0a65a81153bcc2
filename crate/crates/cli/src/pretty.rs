//! `--pretty` rendering: a column table for grids, aligned key/value lines
//! otherwise. Nested objects are shown as compact JSON.

use serde_json::Value;

fn cell(v: &Value) -> String {
    match v {
        Value::Null => "-".into(),
        Value::String(s) => s.clone(),
        Value::Number(n) => match n.as_f64() {
            Some(x) if n.is_f64() => format!("{x:.10e}"),
            _ => n.to_string(),
        },
        other => other.to_string(),
    }
}

fn table(rows: &[Value]) -> String {
    let Some(Value::Object(first)) = rows.first() else {
        return String::new();
    };
    let cols: Vec<&String> = first.keys().filter(|k| *k != "diagnostics").collect();
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| cols.iter().map(|c| cell(r.get(c.as_str()).unwrap_or(&Value::Null))).collect())
        .collect();
    let widths: Vec<usize> = cols
        .iter()
        .enumerate()
        .map(|(i, c)| body.iter().map(|r| r[i].len()).chain([c.len()]).max().unwrap_or(0))
        .collect();
    let line = |cells: Vec<&str>| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(s, w)| format!("{s:>w$}")).collect();
        padded.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(cols.iter().map(|c| c.as_str()).collect());
    for r in &body {
        out += &line(r.iter().map(String::as_str).collect());
    }
    out
}

pub fn render(v: &Value) -> String {
    let Value::Object(m) = v else {
        return format!("{v}\n");
    };
    let width = m.keys().map(|k| k.len()).max().unwrap_or(0);
    let mut out = String::new();
    for (k, x) in m {
        if k == "points" {
            continue;
        }
        out += &format!("{k:<width$}  {}\n", cell(x));
    }
    if let Some(Value::Array(rows)) = m.get("points") {
        out.push('\n');
        out += &table(rows);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn grid_becomes_a_table() {
        let v = json!({"command": "cdf", "points": [
            {"q": 1.0, "value": 0.5, "method": "davies", "diagnostics": {}},
            {"q": 2.0, "value": 0.75, "method": "davies", "diagnostics": {}},
        ]});
        let s = render(&v);
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "command  cdf");
        assert!(lines[2].split_whitespace().eq(["q", "value", "method"]));
        assert_eq!(lines.len(), 5);
    }
}
