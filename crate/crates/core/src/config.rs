//! Run configuration: flat `key = value` text with `#` comments.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::mesh::LShapeDiagonal;
use crate::problem::{Domain, Preset, Problem};
use crate::solver::{ActiveSetConvention, SolverOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    /// A preset name or `custom`.
    pub problem: String,
    pub domain: Option<String>,
    pub chi: Option<String>,
    pub f: Option<String>,
    pub levels: Option<usize>,
    pub level: usize,
    pub tol_newton: f64,
    pub tol_pdas: f64,
    pub max_pdas: usize,
    pub max_newton: usize,
    pub quad_degree: Option<usize>,
    pub convention: ActiveSetConvention,
    pub lshape_diagonal: LShapeDiagonal,
    pub warm_start_beta: bool,
    pub detect_cycles: bool,
    pub out: PathBuf,
    pub csv: bool,
    pub svg: bool,
    pub matrix_dump: bool,
    pub jsonl_log: bool,
}

impl Default for Config {
    fn default() -> Self {
        let o = SolverOptions::default();
        Self {
            problem: String::from("example1"),
            domain: None,
            chi: None,
            f: None,
            levels: None,
            level: 4,
            tol_newton: o.tol_newton,
            tol_pdas: o.tol_pdas,
            max_pdas: o.max_pdas,
            max_newton: o.max_newton,
            quad_degree: None,
            convention: o.convention,
            lshape_diagonal: LShapeDiagonal::default(),
            warm_start_beta: o.warm_start_beta,
            detect_cycles: o.detect_cycles,
            out: PathBuf::from("out"),
            csv: true,
            svg: false,
            matrix_dump: false,
            jsonl_log: false,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("invalid value '{value}' for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::InvalidArgument(format!("invalid boolean '{value}' for {key}"))),
    }
}

impl Config {
    pub const KEYS: [&'static str; 20] = [
        "problem",
        "domain",
        "chi",
        "f",
        "levels",
        "level",
        "tol_newton",
        "tol_pdas",
        "max_pdas",
        "max_newton",
        "quad_degree",
        "convention",
        "lshape_diagonal",
        "warm_start_beta",
        "detect_cycles",
        "out",
        "csv",
        "svg",
        "matrix_dump",
        "jsonl_log",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "problem" => {
                if value != "custom" {
                    value.parse::<Preset>()?;
                }
                self.problem = value.to_string();
            }
            "domain" => {
                value.parse::<Domain>()?;
                self.domain = Some(value.to_string());
            }
            "chi" => self.chi = Some(value.to_string()),
            "f" => self.f = Some(value.to_string()),
            "levels" => self.levels = Some(parse_num(key, value)?),
            "level" => self.level = parse_num(key, value)?,
            "tol_newton" => self.tol_newton = parse_num(key, value)?,
            "tol_pdas" => self.tol_pdas = parse_num(key, value)?,
            "max_pdas" => self.max_pdas = parse_num(key, value)?,
            "max_newton" => self.max_newton = parse_num(key, value)?,
            "quad_degree" => self.quad_degree = Some(parse_num(key, value)?),
            "convention" => self.convention = value.parse()?,
            "lshape_diagonal" => self.lshape_diagonal = value.parse()?,
            "warm_start_beta" => self.warm_start_beta = parse_bool(key, value)?,
            "detect_cycles" => self.detect_cycles = parse_bool(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "csv" => self.csv = parse_bool(key, value)?,
            "svg" => self.svg = parse_bool(key, value)?,
            "matrix_dump" => self.matrix_dump = parse_bool(key, value)?,
            "jsonl_log" => self.jsonl_log = parse_bool(key, value)?,
            _ => return Err(Error::InvalidArgument(format!("unknown configuration key '{key}'"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`.
    pub fn merge_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Format {
                    line: i + 1,
                    message: format!("expected 'key = value', got '{line}'"),
                });
            };
            self.set(key.trim(), value).map_err(|e| Error::Format {
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.merge_text(text)?;
        Ok(c)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_text(&fs::read_to_string(path)?)
    }

    pub fn problem(&self) -> Result<Problem> {
        if self.problem == "custom" {
            let domain = match self.domain.as_deref().unwrap_or("square").parse()? {
                Domain::LShape(_) => Domain::LShape(self.lshape_diagonal),
                d => d,
            };
            let chi = self
                .chi
                .as_deref()
                .ok_or_else(|| Error::InvalidArgument(String::from("custom problem needs chi")))?;
            return Problem::custom(domain, chi, self.f.as_deref().unwrap_or("0"));
        }
        if self.chi.is_some() || self.f.is_some() {
            return Err(Error::InvalidArgument(String::from(
                "chi and f can only be set with problem = custom",
            )));
        }
        Ok(Problem::preset_with_diagonal(
            self.problem.parse()?,
            self.lshape_diagonal,
        ))
    }

    /// Reference level for studies.
    pub fn study_levels(&self) -> Result<usize> {
        match (self.levels, self.problem.parse::<Preset>()) {
            (Some(l), _) => Ok(l),
            (None, Ok(p)) => Ok(p.reference_level()),
            (None, Err(_)) => Ok(7),
        }
    }

    pub fn solver_options(&self, problem: &Problem) -> SolverOptions {
        SolverOptions {
            tol_newton: self.tol_newton,
            tol_pdas: self.tol_pdas,
            max_pdas: self.max_pdas,
            max_newton: self.max_newton,
            quad_degree: self.quad_degree.unwrap_or_else(|| problem.load_quad_degree()),
            convention: self.convention,
            warm_start_beta: self.warm_start_beta,
            detect_cycles: self.detect_cycles,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_key_value_text() {
        let c = Config::from_text(
            "# a study\nproblem = example2\nlevels=5 # reference\n\n tol_newton = 1e-9\nconvention = reversed\nsvg = yes\n",
        )
        .unwrap();
        assert_eq!(c.problem, "example2");
        assert_eq!(c.levels, Some(5));
        assert_eq!(c.tol_newton, 1e-9);
        assert_eq!(c.convention, ActiveSetConvention::Reversed);
        assert!(c.svg);
        assert_eq!(c.study_levels().unwrap(), 5);
    }

    #[test]
    fn reports_bad_lines() {
        match Config::from_text("problem = example1\nlevels five") {
            Err(Error::Format { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        match Config::from_text("bogus = 1") {
            Err(Error::Format { line, .. }) => assert_eq!(line, 1),
            other => panic!("{other:?}"),
        }
        assert!(Config::from_text("problem = example9").is_err());
        assert!(Config::from_text("csv = maybe").is_err());
    }

    #[test]
    fn later_settings_win() {
        let mut c = Config::from_text("level = 3\nmax_pdas = 7").unwrap();
        c.set("level", "5").unwrap();
        assert_eq!(c.level, 5);
        assert_eq!(c.max_pdas, 7);
    }

    #[test]
    fn builds_problems() {
        let c = Config::default();
        let p = c.problem().unwrap();
        assert_eq!(p.name, "example1");
        assert_eq!(c.solver_options(&p).quad_degree, 12);
        assert_eq!(c.study_levels().unwrap(), 7);

        let c = Config::from_text("problem = custom\ndomain = lshape\nchi = -1\nf = x^20").unwrap();
        let p = c.problem().unwrap();
        assert!(matches!(p.domain, Domain::LShape(_)));
        assert_eq!(c.solver_options(&p).quad_degree, 22);

        let c = Config::from_text("problem = custom\nchi = x +").unwrap();
        assert!(c.problem().is_err());
        let c = Config::from_text("chi = 0").unwrap();
        assert!(c.problem().is_err());
    }
}
