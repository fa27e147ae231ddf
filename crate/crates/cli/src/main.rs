use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wsdb::bench::{run_bench, write_report, BenchConfig};
use wsdb::chase::{chase_in, parse_dependencies};
use wsdb::confidence::{conf, possible_p};
use wsdb::orset::{inject_noise_uwsdt, load_orset_csv};
use wsdb::query::{eval_uwsdt, parse_query, Query};
use wsdb::uwsdt::{load_dir, save_dir, Uwsdt};
use wsdb::{enumerate_worlds, Error, Schema, Wsd, DEFAULT_WORLD_CAP};

#[derive(Parser)]
#[command(name = "wsdb", version, about = "Probabilistic databases as world-set decompositions")]
struct Cli {
    /// Database directory (template, C, F and W tables).
    #[arg(long, global = true, default_value = "db")]
    db: PathBuf,
    /// Seed for noise injection.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Maximum number of worlds `worlds` may enumerate.
    #[arg(long, global = true, default_value_t = DEFAULT_WORLD_CAP)]
    cap: usize,
    /// Where to write the result instead of the database directory or stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Create the database from or-set CSV files, one relation per file.
    Load {
        #[arg(required = true)]
        csv: Vec<PathBuf>,
        /// Weights file for the first CSV, same shape, `{0.2|0.8}` cells.
        #[arg(long)]
        weights: Option<PathBuf>,
    },
    /// Copy the database to `--out`.
    Save,
    /// Replace random fields of a certain database by or-sets.
    Noise {
        #[arg(long)]
        density: f64,
    },
    /// Enforce the dependencies in a file, conditioning the probabilities.
    Chase { deps: PathBuf },
    /// Evaluate a query; the result is added to the database as a new relation.
    Query { text: String },
    /// Possible tuples of a query answer with their confidence.
    Possible { expr: String },
    /// Confidence of one tuple, written like `(185, 'Smith')`.
    Conf { expr: String, tuple: String },
    /// Component and table sizes.
    Stats { relation: Option<String> },
    /// Run a benchmark described by a TOML file.
    Bench { config: PathBuf },
    /// Enumerate all worlds with their probabilities.
    Worlds,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("wsdb: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Resource(_) => 3,
        Error::Inconsistent(_) => 4,
        _ => 2,
    }
}

fn output(out: &Option<PathBuf>) -> wsdb::Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(io::BufWriter::new(fs::File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn combine(parts: Vec<Wsd>) -> wsdb::Result<Wsd> {
    let mut relations = Vec::new();
    let mut comps = Vec::new();
    for w in &parts {
        relations.extend(w.schema().relations().iter().cloned());
        comps.extend(w.components().map(|(_, c)| c.clone()));
    }
    Wsd::new(Schema::new(relations)?, comps)
}

fn run(cli: Cli) -> wsdb::Result<()> {
    let Cli { db, seed, cap, out, command } = cli;
    let target = out.clone().unwrap_or_else(|| db.clone());
    match command {
        Command::Load { csv, weights } => {
            let mut parts = Vec::new();
            for (i, p) in csv.iter().enumerate() {
                parts.push(load_orset_csv(p, if i == 0 { weights.as_deref() } else { None })?);
            }
            let u = Uwsdt::from_wsd(&combine(parts)?);
            fresh_dir(&target)?;
            save_dir(&u, &target)
        }
        Command::Save => {
            if out.is_none() {
                return Err(Error::Validation("save needs --out".into()));
            }
            let u = load_dir(&db)?;
            fresh_dir(&target)?;
            save_dir(&u, &target)
        }
        Command::Noise { density } => {
            let u = inject_noise_uwsdt(&load_dir(&db)?, density, seed)?;
            fresh_dir(&target)?;
            save_dir(&u, &target)
        }
        Command::Chase { deps } => {
            let deps = parse_dependencies(&fs::read_to_string(deps)?)?;
            let mut u = load_dir(&db)?;
            chase_in(&mut u, &deps)?;
            fresh_dir(&target)?;
            save_dir(&u, &target)
        }
        Command::Query { text } => match parse_query(&text)? {
            Query::Expr(e) => {
                let mut u = load_dir(&db)?;
                let name = eval_uwsdt(&mut u, &e)?;
                let s = u.stats(Some(&name))?;
                fresh_dir(&target)?;
                save_dir(&u, &target)?;
                println!("{name}: {} template rows, {} components", s.template_rows, s.n_components);
                Ok(())
            }
            Query::Possible(e) => possible_cmd(&db, &out, &e.to_string()),
            Query::Conf(e, t) => {
                let mut u = load_dir(&db)?;
                let name = eval_uwsdt(&mut u, &e)?;
                println!("{}", conf(&u, &name, &t)?);
                Ok(())
            }
        },
        Command::Possible { expr } => possible_cmd(&db, &out, &expr),
        Command::Conf { expr, tuple } => {
            let Query::Conf(e, t) = parse_query(&format!("conf({expr}, {tuple})"))? else { unreachable!() };
            let mut u = load_dir(&db)?;
            let name = eval_uwsdt(&mut u, &e)?;
            println!("{}", conf(&u, &name, &t)?);
            Ok(())
        }
        Command::Stats { relation } => {
            let s = load_dir(&db)?.stats(relation.as_deref())?;
            let mut w = output(&out)?;
            writeln!(w, "n_comp,n_comp_gt1,c_rows,template_rows")?;
            writeln!(w, "{},{},{},{}", s.n_components, s.n_components_gt1, s.c_rows, s.template_rows)?;
            Ok(())
        }
        Command::Bench { config } => {
            let cfg = BenchConfig::from_toml(&fs::read_to_string(config)?)?;
            write_report(&run_bench(&cfg)?, output(&out)?)
        }
        Command::Worlds => {
            let wsd = load_dir(&db)?.to_wsd()?;
            let worlds = enumerate_worlds(&wsd, cap)?;
            let mut w = output(&out)?;
            for (i, (world, p)) in worlds.iter().enumerate() {
                writeln!(w, "world {} p={p}", i + 1)?;
                for (rel, tuples) in &world.relations {
                    for t in tuples {
                        let vals: Vec<String> = t.iter().map(|v| v.encode()).collect();
                        writeln!(w, "  {rel}({})", vals.join(", "))?;
                    }
                }
            }
            Ok(())
        }
    }
}

fn possible_cmd(db: &Path, out: &Option<PathBuf>, expr: &str) -> wsdb::Result<()> {
    let Query::Expr(e) = parse_query(expr)? else {
        return Err(Error::Validation("expected a relational expression".into()));
    };
    let mut u = load_dir(db)?;
    let attrs = e.attrs(u.schema())?;
    let name = eval_uwsdt(&mut u, &e)?;
    let mut w = csv::Writer::from_writer(output(out)?);
    w.write_record(attrs.iter().map(String::as_str).chain(["p"]))?;
    for (t, p) in possible_p(&u, &name)? {
        w.write_record(t.iter().map(|v| v.encode()).chain([p.to_string()]))?;
    }
    w.flush()?;
    Ok(())
}

/// Removes the files of a previous database so no stale template survives.
fn fresh_dir(dir: &Path) -> wsdb::Result<()> {
    if let Ok(entries) = fs::read_dir(dir) {
        for e in entries {
            let p = e?.path();
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            if name.ends_with(".template.csv") || ["c.csv", "f.csv", "w.csv"].contains(&name) {
                fs::remove_file(p)?;
            }
        }
    }
    Ok(())
}
