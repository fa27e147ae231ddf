//! Census-shaped benchmark: a synthetic relation, noise, chase, then queries.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::chase::{chase_in, parse_dependencies, Dependency};
use crate::error::{Error, Result};
use crate::model::{RelationSchema, Schema};
use crate::orset::inject_noise_uwsdt;
use crate::query::{eval_uwsdt, parse_expr, Expr};
use crate::uwsdt::{Cell, StatsReport, Uwsdt};
use crate::value::Value;

/// Attributes of the synthetic relation `R` with their largest value; domains start at 0.
pub const CENSUS_ATTRS: [(&str, i64); 20] = [
    ("AGE", 90),
    ("SEX", 2),
    ("RACE", 9),
    ("MARITAL", 4),
    ("RSPOUSE", 6),
    ("FERTIL", 13),
    ("CITIZEN", 4),
    ("IMMIGR", 10),
    ("ENGLISH", 4),
    ("YEARSCH", 17),
    ("POWSTATE", 59),
    ("POB", 59),
    ("WWII", 1),
    ("MILITARY", 4),
    ("SCHOOL", 3),
    ("LANG1", 2),
    ("CLASS", 9),
    ("MEANS", 12),
    ("INCOME1", 50),
    ("DISABL1", 2),
];

pub const CENSUS_DEPENDENCIES: &str = "\
FORALL t IN R : t.WWII = 1 -> t.MILITARY != 4
FORALL t IN R : t.CITIZEN = 0 -> t.IMMIGR = 0
FORALL t IN R : t.MARITAL = 0 -> t.RSPOUSE = 0
FORALL t IN R : t.AGE < 15 -> t.MARITAL = 0
FORALL t IN R : t.AGE < 15 -> t.FERTIL = 0
FORALL t IN R : t.SEX = 1 -> t.FERTIL = 0
FORALL t IN R : t.AGE < 50 -> t.WWII = 0
FORALL t IN R : t.AGE < 17 -> t.MILITARY = 0
FORALL t IN R : t.CITIZEN = 0 -> t.POB <= 56
FORALL t IN R : t.LANG1 = 2 -> t.ENGLISH = 0
FORALL t IN R : t.AGE < 16 -> t.CLASS = 0
FORALL t IN R : t.YEARSCH = 17 -> t.AGE >= 25
";

/// The queries run against `R`, by name.
///
/// `Q4` needs a disjunction, written as the union of two selections.
pub const CENSUS_QUERIES: [(&str, &str); 5] = [
    ("Q1", "select(R, YEARSCH = 17 and CITIZEN = 0)"),
    ("Q2", "project(select(R, CITIZEN != 0 and ENGLISH > 3), [POWSTATE, CITIZEN, IMMIGR])"),
    ("Q3", "project(select(select(R, FERTIL > 4 and MARITAL = 1), POWSTATE = POB), [POWSTATE, MARITAL, FERTIL])"),
    ("Q4", "union(select(R, FERTIL = 1 and RSPOUSE = 1), select(R, FERTIL = 1 and RSPOUSE = 2))"),
    ("Q6", "project(select(R, ENGLISH = 3), [POWSTATE, POB])"),
];

pub fn census_dependencies() -> Vec<Dependency> {
    parse_dependencies(CENSUS_DEPENDENCIES).expect("built-in dependencies parse")
}

pub fn census_query(name: &str) -> Option<Expr> {
    CENSUS_QUERIES.iter().find(|q| q.0 == name).map(|q| parse_expr(q.1).expect("built-in query parses"))
}

fn census_row(rng: &mut impl Rng) -> [i64; 20] {
    let mut v = CENSUS_ATTRS.map(|(_, max)| rng.gen_range(0..=max));
    let [age, sex, _, marital, rspouse, fertil, citizen, immigr, english, yearsch, powstate, pob, wwii, military, _, lang1, class, ..] =
        &mut v;
    *sex = rng.gen_range(1..=2);
    *citizen = if rng.gen_bool(0.8) { 0 } else { rng.gen_range(1..=4) };
    if rng.gen_bool(0.5) {
        *pob = *powstate;
    }
    if *age < 15 {
        *marital = 0;
        *fertil = 0;
    }
    if *sex == 1 {
        *fertil = 0;
    }
    if *marital == 0 {
        *rspouse = 0;
    }
    if *age < 50 {
        *wwii = 0;
    }
    if *age < 17 {
        *military = 0;
    }
    if *wwii == 1 && *military == 4 {
        *military = 1;
    }
    if *citizen == 0 {
        *immigr = 0;
        if *pob > 56 {
            *pob -= 56;
        }
    }
    if *lang1 == 2 {
        *english = 0;
    }
    if *age < 16 {
        *class = 0;
    }
    if *yearsch == 17 && *age < 25 {
        *yearsch = 16;
    }
    v
}

/// A certain relation `R` of `size` tuples that satisfies [`CENSUS_DEPENDENCIES`].
pub fn census_relation(size: usize, seed: u64) -> Uwsdt {
    let attrs: Vec<&str> = CENSUS_ATTRS.iter().map(|a| a.0).collect();
    let schema = Schema::new(vec![RelationSchema::new("R", &attrs, size)]).expect("valid schema");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (1..=size as u32)
        .map(|tid| (tid, census_row(&mut rng).iter().map(|&x| Cell::Const(Value::Int(x))).collect()))
        .collect();
    Uwsdt::from_tables(schema, vec![("R".into(), rows)], vec![], vec![], vec![]).expect("valid template")
}

/// Benchmark settings, usually read from TOML.
///
/// ```toml
/// sizes = [10000]
/// densities = [0.0, 0.001]
/// seed = 7
/// repeats = 5
/// queries = ["Q1", "Q2"]
///
/// [[query]]
/// name = "old"
/// text = "select(R, AGE > 80)"
/// ```
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub densities: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    /// Names of built-in queries.
    #[serde(default)]
    pub queries: Vec<String>,
    /// Extra named queries.
    #[serde(default, rename = "query")]
    pub custom: Vec<NamedQuery>,
    /// Dependency text; the built-in census set when absent.
    #[serde(default)]
    pub dependencies: Option<String>,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct NamedQuery {
    pub name: String,
    pub text: String,
}

fn default_repeats() -> usize {
    5
}

impl BenchConfig {
    pub fn from_toml(text: &str) -> Result<BenchConfig> {
        toml::from_str(text).map_err(|e| Error::validation(format!("bench config: {e}")))
    }

    /// Densities in ascending order, always including 0.
    pub fn density_grid(&self) -> Vec<f64> {
        let mut d = self.densities.clone();
        d.push(0.0);
        d.sort_by(f64::total_cmp);
        d.dedup();
        d
    }

    fn resolved_queries(&self) -> Result<Vec<(String, Expr)>> {
        let mut out = Vec::new();
        for name in &self.queries {
            let e = census_query(name).ok_or_else(|| Error::validation(format!("unknown built-in query {name}")))?;
            out.push((name.clone(), e));
        }
        for q in &self.custom {
            out.push((q.name.clone(), parse_expr(&q.text)?));
        }
        Ok(out)
    }
}

/// Generation and chase of one (size, density) cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CellTiming {
    pub size: usize,
    pub density: f64,
    pub generate_ms: f64,
    pub chase_ms: f64,
    pub after_noise: StatsReport,
    pub after_chase: StatsReport,
}

/// One report line: the median time of a query and the size of its answer.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub size: usize,
    pub density: f64,
    pub query: String,
    pub ms: f64,
    pub stats: StatsReport,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BenchReport {
    pub cells: Vec<CellTiming>,
    pub rows: Vec<BenchRow>,
}

pub const REPORT_HEADER: &str = "size,density,query,ms,n_comp,n_comp_gt1,c_rows,template_rows";

fn ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

/// The noisy, chased store for one cell.
pub fn prepare(size: usize, density: f64, seed: u64, deps: &[Dependency]) -> Result<(Uwsdt, CellTiming)> {
    let start = Instant::now();
    let base = census_relation(size, seed);
    let mut u = inject_noise_uwsdt(&base, density, seed)?;
    let generate_ms = ms(start);
    let after_noise = u.stats(None)?;
    let start = Instant::now();
    chase_in(&mut u, deps)?;
    let chase_ms = ms(start);
    let after_chase = u.stats(None)?;
    Ok((u, CellTiming { size, density, generate_ms, chase_ms, after_noise, after_chase }))
}

/// Runs every cell; each query is timed `repeats` times on a fresh copy of the store.
pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.repeats == 0 {
        return Err(Error::validation("repeats must be at least 1"));
    }
    let deps = match &cfg.dependencies {
        Some(text) => parse_dependencies(text)?,
        None => census_dependencies(),
    };
    let queries = cfg.resolved_queries()?;
    let mut report = BenchReport::default();
    for &size in &cfg.sizes {
        for density in cfg.density_grid() {
            let (u, cell) = prepare(size, density, cfg.seed, &deps)?;
            report.cells.push(cell);
            for (name, e) in &queries {
                let mut times = Vec::with_capacity(cfg.repeats);
                let mut stats = StatsReport::default();
                for _ in 0..cfg.repeats {
                    let mut run = u.clone();
                    let start = Instant::now();
                    let out = eval_uwsdt(&mut run, e)?;
                    times.push(ms(start));
                    stats = run.stats(Some(&out))?;
                }
                report.rows.push(BenchRow { size, density, query: name.clone(), ms: median(times), stats });
            }
        }
    }
    Ok(report)
}

/// Writes the report as CSV; without queries, one `chase` line per cell.
pub fn write_report(report: &BenchReport, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_HEADER.split(','))?;
    let mut line = |size: usize, density: f64, query: &str, ms: f64, s: &StatsReport| {
        w.write_record([
            size.to_string(),
            density.to_string(),
            query.to_string(),
            format!("{ms:.3}"),
            s.n_components.to_string(),
            s.n_components_gt1.to_string(),
            s.c_rows.to_string(),
            s.template_rows.to_string(),
        ])
    };
    if report.rows.is_empty() {
        for c in &report.cells {
            line(c.size, c.density, "chase", c.chase_ms, &c.after_chase)?;
        }
    }
    for r in &report.rows {
        line(r.size, r.density, &r.query, r.ms, &r.stats)?;
    }
    w.flush()?;
    Ok(())
}
