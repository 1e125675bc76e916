use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use vkfem::config::Config;
use vkfem::forms::assemble_stiffness;
use vkfem::mesh::{LShapeDiagonal, Triangulation};
use vkfem::morley::MorleySpace;
use vkfem::problem::{Domain, Problem};
use vkfem::solver::{solve, ProblemSpec, SolveResult, Status};
use vkfem::study::{check_smallness, coincidence_set, obstacle_scaling_sweep, refinement_study};
use vkfem::svg::write_svg;
use vkfem::Error;

#[derive(Parser)]
#[command(
    name = "vkfem",
    version,
    about = "Morley FEM solver for the von Karman obstacle problem"
)]
struct Cli {
    /// Configuration file with `key = value` lines; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Exit with status 3 when a solve does not converge.
    #[arg(long, global = true)]
    strict: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve on one level and write the fields and iteration log.
    Solve {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        level: Option<String>,
        /// Write the log as JSON lines.
        #[arg(long)]
        jsonl_log: bool,
        /// Dump the stiffness matrix as `row col value`.
        #[arg(long)]
        matrix_dump: bool,
    },
    /// Refinement study against the finest level.
    Study {
        #[command(flatten)]
        common: CommonArgs,
        /// Reference (finest) level.
        #[arg(long)]
        levels: Option<String>,
        /// Write one SVG per level with the coincidence vertices.
        #[arg(long)]
        svg: bool,
    },
    /// Coincidence set of one level as CSV.
    Coincidence {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        level: Option<String>,
        /// Gap tolerance `u - chi <= tol`.
        #[arg(long, default_value_t = 0.0)]
        tol: f64,
    },
    /// Lower bound for the smallness-of-data constant.
    CheckSmallness {
        #[command(flatten)]
        common: CommonArgs,
        /// Sampling grid per direction for the sup norm.
        #[arg(long, default_value_t = 1001)]
        grid: usize,
    },
    /// Generate, refine and export meshes.
    Mesh {
        #[arg(long, default_value = "square")]
        domain: String,
        #[arg(long, default_value = "falling")]
        diagonal: String,
        /// Read this mesh instead of generating one.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        refine: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Solve with scaled obstacles and report convergence per scale and level.
    ScalingSweep {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_delimiter = ',', default_value = "1,4")]
        scales: Vec<f64>,
        #[arg(long = "at", value_delimiter = ',', default_value = "4,5")]
        at_levels: Vec<usize>,
    },
}

#[derive(Args, Default)]
struct CommonArgs {
    /// example1, example2, example3, lshape or custom.
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    domain: Option<String>,
    /// Obstacle expression for custom problems.
    #[arg(long)]
    chi: Option<String>,
    /// Load expression for custom problems.
    #[arg(long)]
    f: Option<String>,
    #[arg(long)]
    tol_newton: Option<String>,
    #[arg(long)]
    tol_pdas: Option<String>,
    #[arg(long)]
    max_pdas: Option<String>,
    #[arg(long)]
    max_newton: Option<String>,
    #[arg(long)]
    quad_degree: Option<String>,
    /// complementary or reversed.
    #[arg(long)]
    convention: Option<String>,
    /// falling, rising, toward_corner or away_from_corner.
    #[arg(long)]
    lshape_diagonal: Option<String>,
    #[arg(long)]
    warm_start_beta: bool,
    #[arg(long)]
    detect_cycles: bool,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
}

impl CommonArgs {
    fn apply(&self, c: &mut Config) -> vkfem::Result<()> {
        let pairs = [
            ("problem", &self.problem),
            ("domain", &self.domain),
            ("chi", &self.chi),
            ("f", &self.f),
            ("tol_newton", &self.tol_newton),
            ("tol_pdas", &self.tol_pdas),
            ("max_pdas", &self.max_pdas),
            ("max_newton", &self.max_newton),
            ("quad_degree", &self.quad_degree),
            ("convention", &self.convention),
            ("lshape_diagonal", &self.lshape_diagonal),
            ("out", &self.out),
        ];
        for (key, value) in pairs {
            if let Some(v) = value {
                c.set(key, v)?;
            }
        }
        if self.warm_start_beta {
            c.set("warm_start_beta", "true")?;
        }
        if self.detect_cycles {
            c.set("detect_cycles", "true")?;
        }
        Ok(())
    }
}

#[derive(Debug)]
enum Failure {
    Lib(Error),
    NotConverged(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Lib(Error::Io(e))
    }
}

type Outcome = Result<(), Failure>;

fn exit_code(f: &Failure) -> u8 {
    match f {
        Failure::Lib(Error::Io(_)) => 4,
        Failure::Lib(Error::Parse { .. } | Error::Format { .. } | Error::InvalidArgument(_)) => 2,
        Failure::Lib(_) | Failure::NotConverged(_) => 3,
    }
}

fn load_config(path: Option<&Path>) -> vkfem::Result<Config> {
    match path {
        Some(p) => Config::from_file(p),
        None => Ok(Config::default()),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn level_spec(config: &Config, problem: &Problem) -> vkfem::Result<ProblemSpec> {
    let mesh = problem.domain.hierarchy(config.level)?;
    let mesh = mesh.level(config.level).expect("finest level exists");
    let space = MorleySpace::new(Arc::clone(mesh))?;
    Ok(ProblemSpec::new(space, problem.obstacle_fn(), problem.load_fn()).with_options(config.solver_options(problem)))
}

fn check_status(strict: bool, what: &str, status: Status) -> Outcome {
    if strict && status != Status::Converged {
        return Err(Failure::NotConverged(format!("{what}: {status}")));
    }
    Ok(())
}

fn summarize(r: &SolveResult) {
    println!(
        "status {}  outer {}  max newton {}  active {}  final change {:.3e}",
        r.status,
        r.outer_iterations(),
        r.max_newton_iterations(),
        r.active_set.len(),
        r.final_change()
    );
    for w in &r.warnings {
        eprintln!("warning: {w}");
    }
}

fn run_solve(config: &Config, strict: bool) -> Outcome {
    let problem = config.problem()?;
    let spec = level_spec(config, &problem)?;
    let r = solve(&spec)?;
    summarize(&r);
    let out = &config.out;
    fs::create_dir_all(out)?;
    spec.space.mesh().write_text(create(&out.join("mesh.txt"))?)?;
    r.u.write_text(create(&out.join("u.txt"))?)?;
    r.v.write_text(create(&out.join("v.txt"))?)?;
    r.lambda.write_text(create(&out.join("lambda.txt"))?)?;
    let log_name = if config.jsonl_log { "log.jsonl" } else { "log.txt" };
    r.write_log(create(&out.join(log_name))?, config.jsonl_log)?;
    if config.matrix_dump {
        assemble_stiffness(&spec.space).write_coordinates(create(&out.join("stiffness.txt"))?)?;
    }
    println!("wrote {}", out.display());
    check_status(strict, "solve", r.status)
}

fn run_study(config: &Config, strict: bool) -> Outcome {
    let problem = config.problem()?;
    let levels = config.study_levels()?;
    let run = refinement_study(&problem, levels, &config.solver_options(&problem))?;
    print!("{}", run.report);
    let out = &config.out;
    fs::create_dir_all(out)?;
    if config.csv {
        let mut w = create(&out.join("study.csv"))?;
        run.report.write_csv(&mut w)?;
        w.flush()?;
        let mut w = create(&out.join("coincidence.csv"))?;
        run.report.write_coincidence_csv(&mut w)?;
        w.flush()?;
    }
    if config.svg {
        for c in &run.report.coincidence {
            let mesh = run.hierarchy.level(c.level).expect("level in hierarchy");
            let mut w = create(&out.join(format!("coincidence_{}.svg", c.level)))?;
            write_svg(mesh, &c.vertices, &mut w)?;
            w.flush()?;
        }
    }
    println!("wrote {}", out.display());
    for r in &run.report.levels {
        check_status(strict, &format!("level {}", r.level), r.status)?;
    }
    Ok(())
}

fn run_coincidence(config: &Config, tol: f64, strict: bool) -> Outcome {
    let problem = config.problem()?;
    let spec = level_spec(config, &problem)?;
    let r = solve(&spec)?;
    summarize(&r);
    let mesh = spec.space.mesh();
    let obstacle = problem.obstacle_fn();
    let contact = coincidence_set(&r.u, &*obstacle, tol);
    let active = r.active_vertices();
    fs::create_dir_all(&config.out)?;
    let path = config.out.join(format!("coincidence_{}.csv", config.level));
    let mut w = create(&path)?;
    writeln!(w, "vertex,x,y,gap,coincident,active")?;
    for p in (0..mesh.n_vertices()).filter(|&p| !mesh.is_boundary_vertex(p)) {
        let x = mesh.vertices()[p];
        writeln!(
            w,
            "{p},{},{},{},{},{}",
            x[0],
            x[1],
            r.u.vertex_value(p) - obstacle(x),
            u8::from(contact.binary_search(&p).is_ok()),
            u8::from(active.contains(&p))
        )?;
    }
    w.flush()?;
    println!("{} coincidence vertices, wrote {}", contact.len(), path.display());
    check_status(strict, "coincidence", r.status)
}

fn run_smallness(config: &Config, grid: usize) -> Outcome {
    let problem = config.problem()?;
    let s = check_smallness(&problem, grid)?;
    println!("||w||_L2 / |||w|||   = {:.6}", s.ratio_l2);
    println!("||w||_Linf / |||w||| = {:.6}", s.ratio_linf);
    println!("||f||_L2             = {:.6}", s.load_l2);
    println!("sqrt(3) C_S C_F ||f|| >= {:.6}", s.bound);
    println!("threshold sqrt(2) - 1 = {:.6}", s.threshold);
    if s.violated() {
        println!("smallness condition VIOLATED");
    } else {
        println!("smallness condition not ruled out (lower bound below threshold)");
    }
    Ok(())
}

fn run_mesh(
    domain: &str,
    diagonal: &str,
    input: Option<&Path>,
    refine: usize,
    out: Option<&Path>,
    svg: Option<&Path>,
) -> Outcome {
    let mut mesh = match input {
        Some(p) => Triangulation::read_text(BufReader::new(File::open(p)?))?,
        None => {
            let d = match domain.parse::<Domain>()? {
                Domain::LShape(_) => Domain::LShape(diagonal.parse::<LShapeDiagonal>()?),
                d => d,
            };
            d.base_mesh()?
        }
    };
    for _ in 0..refine {
        mesh = mesh.red_refine();
    }
    let s = mesh.statistics();
    println!(
        "level {}  vertices {}  triangles {}  edges {}  interior vertices {}  interior edges {}  h_max {:.6}  min angle {:.4}  area {:.6}",
        mesh.level(),
        s.n_vertices,
        s.n_triangles,
        s.n_edges,
        s.interior_vertices,
        s.interior_edges,
        s.h_max,
        s.min_angle.to_degrees(),
        s.area
    );
    if let Some(p) = out {
        let mut w = create(p)?;
        mesh.write_text(&mut w)?;
        w.flush()?;
    }
    if let Some(p) = svg {
        let mut w = create(p)?;
        write_svg(&mesh, &[], &mut w)?;
        w.flush()?;
    }
    Ok(())
}

fn run_sweep(config: &Config, scales: &[f64], levels: &[usize], strict: bool) -> Outcome {
    let problem = config.problem()?;
    let records = obstacle_scaling_sweep(&problem, scales, levels, &config.solver_options(&problem))?;
    fs::create_dir_all(&config.out)?;
    let mut w = create(&config.out.join("sweep.csv"))?;
    writeln!(w, "scale,level,status,outer_iters")?;
    println!("{:>8} {:>6} {:>16} {:>6}", "scale", "level", "status", "outer");
    for r in &records {
        writeln!(w, "{},{},{},{}", r.scale, r.level, r.status, r.outer_iters)?;
        println!(
            "{:>8} {:>6} {:>16} {:>6}",
            r.scale,
            r.level,
            r.status.to_string(),
            r.outer_iters
        );
    }
    w.flush()?;
    for r in &records {
        check_status(strict, &format!("scale {} level {}", r.scale, r.level), r.status)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Outcome {
    if let Ok(n) = std::env::var("VKFEM_THREADS") {
        let n: usize = n
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("VKFEM_THREADS must be a count, got '{n}'")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    let mut config = load_config(cli.config.as_deref())?;
    let strict = cli.strict;
    match cli.command {
        Command::Solve {
            common,
            level,
            jsonl_log,
            matrix_dump,
        } => {
            common.apply(&mut config)?;
            if let Some(l) = level {
                config.set("level", &l)?;
            }
            config.jsonl_log |= jsonl_log;
            config.matrix_dump |= matrix_dump;
            run_solve(&config, strict)
        }
        Command::Study { common, levels, svg } => {
            common.apply(&mut config)?;
            if let Some(l) = levels {
                config.set("levels", &l)?;
            }
            config.svg |= svg;
            run_study(&config, strict)
        }
        Command::Coincidence { common, level, tol } => {
            common.apply(&mut config)?;
            if let Some(l) = level {
                config.set("level", &l)?;
            }
            run_coincidence(&config, tol, strict)
        }
        Command::CheckSmallness { common, grid } => {
            common.apply(&mut config)?;
            run_smallness(&config, grid)
        }
        Command::Mesh {
            domain,
            diagonal,
            input,
            refine,
            out,
            svg,
        } => run_mesh(
            &domain,
            &diagonal,
            input.as_deref(),
            refine,
            out.as_deref(),
            svg.as_deref(),
        ),
        Command::ScalingSweep {
            common,
            scales,
            at_levels,
        } => {
            common.apply(&mut config)?;
            run_sweep(&config, &scales, &at_levels, strict)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Lib(e) => eprintln!("error: {e}"),
                Failure::NotConverged(what) => eprintln!("error: not converged ({what})"),
            }
            ExitCode::from(exit_code(&f))
        }
    }
}
