//! Reader for MATPOWER `.m` case files.
//!
//! Only `baseMVA`, `bus`, `branch`, `gen` and `gencost` are consumed. Load
//! frequency response is not part of the format and is synthesized from bus
//! demand; dynamic impedances come from branch reactance, bus voltage
//! magnitudes and angle differences.

use super::{dynamic_impedance, Bus, BusId, GeneratorSpec, GridError, GridSpec, Line, ParseOptions};
use std::collections::HashMap;

// Thermal limit used for branches with RATE_A = 0 (unlimited), MW.
const UNLIMITED_RATING: f64 = 1e6;

struct Matrix {
    rows: Vec<Vec<f64>>,
    lines: Vec<usize>,
}

fn parse_error(line: usize, message: impl Into<String>) -> GridError {
    GridError::Parse {
        line,
        column: 1,
        message: message.into(),
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find('%') {
        Some(i) => &line[..i],
        None => line,
    }
}

fn parse_tables(text: &str) -> Result<(HashMap<String, Matrix>, Option<f64>), GridError> {
    let mut tables = HashMap::new();
    let mut base_mva = None;
    let mut current: Option<(String, Matrix)> = None;
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let mut line = strip_comment(raw).trim();
        if current.is_none() {
            let Some(rest) = line.strip_prefix("mpc.") else {
                continue;
            };
            let Some((name, value)) = rest.split_once('=') else {
                continue;
            };
            let name = name.trim().to_string();
            let value = value.trim();
            if let Some(body) = value.strip_prefix('[') {
                current = Some((
                    name,
                    Matrix {
                        rows: Vec::new(),
                        lines: Vec::new(),
                    },
                ));
                line = body;
            } else {
                if name == "baseMVA" {
                    let v = value.trim_end_matches(';').trim();
                    base_mva = Some(v.parse::<f64>().map_err(|_| {
                        parse_error(lineno, format!("field baseMVA: cannot parse '{v}'"))
                    })?);
                }
                continue;
            }
        }
        let (body, closed) = match line.find(']') {
            Some(i) => (&line[..i], true),
            None => (line, false),
        };
        let (name, matrix) = current.as_mut().expect("inside a matrix");
        for row in body.split(';') {
            let mut values = Vec::new();
            for tok in row.split(|c: char| c.is_whitespace() || c == ',') {
                if tok.is_empty() {
                    continue;
                }
                let v = tok.parse::<f64>().map_err(|_| {
                    parse_error(lineno, format!("field mpc.{name}: cannot parse '{tok}'"))
                })?;
                values.push(v);
            }
            if !values.is_empty() {
                matrix.rows.push(values);
                matrix.lines.push(lineno);
            }
        }
        if closed {
            let (name, matrix) = current.take().unwrap();
            tables.insert(name, matrix);
        }
    }
    if let Some((name, _)) = current {
        return Err(parse_error(text.lines().count(), format!("unterminated matrix mpc.{name}")));
    }
    Ok((tables, base_mva))
}

fn column(m: &Matrix, row: usize, col: usize, table: &str, field: &str) -> Result<f64, GridError> {
    m.rows[row].get(col).copied().ok_or_else(|| {
        parse_error(
            m.lines[row],
            format!("mpc.{table} row {} is missing column {} ({field})", row + 1, col + 1),
        )
    })
}

/// Convert a MATPOWER case into the native schema.
///
/// Isolated buses (type 4), out-of-service branches and their dependents are
/// dropped. Bus numbers are remapped to `0..n` in file order and the first
/// type-3 bus becomes the reference. Load response is
/// `-load_damping_per_hz * PD` MW/Hz at each bus with positive demand.
pub fn parse_matpower(text: &str, opts: &ParseOptions) -> Result<GridSpec, GridError> {
    let (tables, base_mva) = parse_tables(text)?;
    let base_mva = base_mva.unwrap_or(100.0);
    let get = |name: &str| {
        tables
            .get(name)
            .ok_or_else(|| parse_error(1, format!("missing matrix mpc.{name}")))
    };
    let bus_m = get("bus")?;
    let branch_m = get("branch")?;
    let gen_m = get("gen")?;

    let mut index: HashMap<i64, usize> = HashMap::new();
    let mut buses = Vec::new();
    let mut vm = Vec::new();
    let mut va = Vec::new();
    let mut reference = None;
    for r in 0..bus_m.rows.len() {
        let number = column(bus_m, r, 0, "bus", "BUS_I")? as i64;
        let kind = column(bus_m, r, 1, "bus", "BUS_TYPE")? as i64;
        if kind == 4 {
            continue;
        }
        let pd = column(bus_m, r, 2, "bus", "PD")?;
        let id = buses.len();
        if kind == 3 && reference.is_none() {
            reference = Some(id);
        }
        index.insert(number, id);
        buses.push(Bus {
            id: BusId(id),
            beta_l: if pd > 0.0 { -opts.load_damping_per_hz * pd } else { 0.0 },
        });
        vm.push(column(bus_m, r, 7, "bus", "VM")?);
        va.push(column(bus_m, r, 8, "bus", "VA")?.to_radians());
    }
    let reference = reference
        .ok_or_else(|| parse_error(bus_m.lines.first().copied().unwrap_or(1), "no reference (type 3) bus"))?;

    let mut lines = Vec::new();
    for r in 0..branch_m.rows.len() {
        let status = branch_m.rows[r].get(10).copied().unwrap_or(1.0);
        if status == 0.0 {
            continue;
        }
        let f = column(branch_m, r, 0, "branch", "F_BUS")? as i64;
        let t = column(branch_m, r, 1, "branch", "T_BUS")? as i64;
        let (Some(&fi), Some(&ti)) = (index.get(&f), index.get(&t)) else {
            continue;
        };
        let x = column(branch_m, r, 3, "branch", "BR_X")?;
        let rate = column(branch_m, r, 5, "branch", "RATE_A")?;
        let sd_pu = dynamic_impedance(x, vm[fi], vm[ti], va[fi] - va[ti]).map_err(|e| {
            parse_error(branch_m.lines[r], format!("mpc.branch row {}: {e}", r + 1))
        })?;
        lines.push(Line {
            from: BusId(fi),
            to: BusId(ti),
            dynamic_impedance: sd_pu / base_mva,
            thermal_limit: if rate > 0.0 { rate } else { UNLIMITED_RATING },
            nominal_flow: 0.0,
        });
    }

    let cost_m = tables.get("gencost");
    let mut generators = Vec::new();
    for r in 0..gen_m.rows.len() {
        let number = column(gen_m, r, 0, "gen", "GEN_BUS")? as i64;
        let Some(&bus) = index.get(&number) else {
            continue;
        };
        let online = column(gen_m, r, 7, "gen", "GEN_STATUS")? > 0.0;
        let p_max = column(gen_m, r, 8, "gen", "PMAX")?;
        let p_min = column(gen_m, r, 9, "gen", "PMIN")?;
        let ramp_agc = gen_m.rows[r].get(16).copied().unwrap_or(0.0);
        let ramp_10 = gen_m.rows[r].get(17).copied().unwrap_or(0.0);
        let ramp = if ramp_agc > 0.0 {
            ramp_agc
        } else if ramp_10 > 0.0 {
            ramp_10 / 10.0
        } else {
            (p_max - p_min).abs().max(1.0) / 10.0
        };
        let (c1, c2, c3) = match cost_m {
            Some(m) if r < m.rows.len() => polynomial_cost(m, r)?,
            _ => (0.0, 0.0, 0.0),
        };
        generators.push(GeneratorSpec {
            bus: BusId(bus),
            online,
            c1,
            c2,
            c3,
            p_min,
            p_max,
            ramp_min: -ramp,
            ramp_max: ramp,
            energy_target: None,
        });
    }

    Ok(GridSpec {
        buses,
        lines,
        generators,
        reference_bus: BusId(reference),
        base_mva,
    })
}

fn polynomial_cost(m: &Matrix, r: usize) -> Result<(f64, f64, f64), GridError> {
    let model = column(m, r, 0, "gencost", "MODEL")?;
    if model != 2.0 {
        return Err(parse_error(
            m.lines[r],
            format!("mpc.gencost row {}: only polynomial (model 2) costs are supported", r + 1),
        ));
    }
    let ncost = column(m, r, 3, "gencost", "NCOST")? as usize;
    let mut coeffs = Vec::with_capacity(ncost);
    for k in 0..ncost {
        coeffs.push(column(m, r, 4 + k, "gencost", "COST")?);
    }
    match coeffs.as_slice() {
        [] => Ok((0.0, 0.0, 0.0)),
        [c] => Ok((0.0, 0.0, *c)),
        [b, c] => Ok((0.0, *b, *c)),
        [a, b, c] => Ok((*a, *b, *c)),
        _ => Err(parse_error(
            m.lines[r],
            format!("mpc.gencost row {}: polynomials above degree 2 are not supported", r + 1),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Grid, GenId};

    const CASE: &str = r#"
function mpc = case3
mpc.version = '2';
mpc.baseMVA = 100;
%% bus data
mpc.bus = [
	1	3	0	0	0	0	1	1.0	0	345	1	1.1	0.9;
	2	1	90	30	0	0	1	1.0	0	345	1	1.1	0.9;
	3	2	60	0	0	0	1	1.0	0	345	1	1.1	0.9;
];
mpc.gen = [
	1	0	0	300	-300	1	100	1	250	10	0	0	0	0	0	0	0	0	0	0	0;
	3	85	0	300	-300	1	100	1	270	10	0	0	0	0	0	0	0	50	0	0	0;
];
mpc.branch = [
	1	2	0	0.1	0	250	250	250	0	0	1	-360	360;
	2	3	0	0.2	0	0	250	250	0	0	1	-360	360;
	1	3	0	0.1	0	250	250	250	0	0	0	-360	360;
];
mpc.gencost = [
	2	0	0	3	0.11	5	150;
	2	0	0	3	0.085	1.2	600;
];
"#;

    #[test]
    fn reads_small_case() {
        let spec = parse_matpower(CASE, &ParseOptions::default()).unwrap();
        assert_eq!(spec.buses.len(), 3);
        assert_eq!(spec.lines.len(), 2);
        assert_eq!(spec.reference_bus, BusId(0));
        assert!((spec.buses[1].beta_l + 1.8).abs() < 1e-12);
        assert!((spec.lines[0].dynamic_impedance - 0.001).abs() < 1e-15);
        assert_eq!(spec.lines[1].thermal_limit, UNLIMITED_RATING);
        assert_eq!(spec.generators[1].ramp_max, 5.0);
        assert_eq!(spec.generators[0].ramp_max, 24.0);
        assert_eq!(spec.generators[0].c1, 0.11);
        let grid = Grid::new(spec, &ParseOptions::default()).unwrap();
        assert_eq!(grid.online_generators(), &[GenId(0), GenId(1)]);
    }

    #[test]
    fn bad_number_reports_line() {
        let text = CASE.replace("0.085", "abc");
        match parse_matpower(&text, &ParseOptions::default()).unwrap_err() {
            GridError::Parse { line, message, .. } => {
                assert_eq!(line, 22);
                assert!(message.contains("gencost"));
            }
            other => panic!("unexpected {other}"),
        }
    }
}
