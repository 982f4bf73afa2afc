//! Run configuration: `key = value` settings resolved into typed options.
//!
//! Settings come from an optional config file, then from command-line flags,
//! later sources overriding earlier ones. Every key that influences a run is
//! echoed, with its resolved value, into the manifest of the run; the manifest
//! is itself a valid config file.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use gpssm_core::mcmc::{ProposalConfig, VarianceProposal, X0Proposal, XProposal};
use gpssm_core::model::PriorSpec;
use gpssm_core::multivariate::{
    BPriorScale, CovProposal, GBlockProposal, MvPriorSpec, MvProposalConfig, MvX0Proposal, MvXProposal,
};

use crate::error::{CliError, Result};
use crate::io::read_key_values;

/// Raw settings, keyed by option name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    pub fn from_file(path: &Path) -> Result<Self> {
        let mut s = Settings::default();
        for (k, v, line) in read_key_values(path)? {
            if s.values.insert(k.clone(), v).is_some() {
                return Err(CliError::Config {
                    path: path.to_path_buf(),
                    line,
                    msg: format!("key '{k}' is set twice"),
                });
            }
        }
        Ok(s)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.values.insert(key.to_string(), value.into());
    }

    /// Parses `key=value` as given to `--set`.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        match pair.split_once('=') {
            Some((k, v)) if !k.trim().is_empty() && !v.trim().is_empty() => {
                self.set(k.trim(), v.trim());
                Ok(())
            }
            _ => Err(CliError::Usage(format!("--set expects key=value, got '{pair}'"))),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }
}

/// Reads typed values out of [`Settings`], recording each resolved value.
pub struct Resolver<'a> {
    settings: &'a Settings,
    used: BTreeSet<String>,
    manifest: Vec<(String, String)>,
}

impl<'a> Resolver<'a> {
    pub fn new(settings: &'a Settings) -> Self {
        Self {
            settings,
            used: BTreeSet::new(),
            manifest: Vec::new(),
        }
    }

    fn raw(&mut self, key: &str) -> Option<&'a str> {
        self.used.insert(key.to_string());
        self.settings.get(key)
    }

    pub fn value<T: FromStr + Display>(&mut self, key: &str, default: T) -> Result<T> {
        let v = match self.raw(key) {
            Some(s) => s
                .parse::<T>()
                .map_err(|_| CliError::option(key, format!("cannot parse '{s}'")))?,
            None => default,
        };
        self.manifest.push((key.to_string(), v.to_string()));
        Ok(v)
    }

    pub fn choice<T: Copy + PartialEq>(&mut self, key: &str, default: T, options: &[(&str, T)]) -> Result<T> {
        let v = match self.raw(key) {
            Some(s) => options.iter().find(|(n, _)| *n == s).map(|(_, v)| *v).ok_or_else(|| {
                let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                CliError::option(key, format!("'{s}' is not one of {}", names.join(", ")))
            })?,
            None => default,
        };
        let name = options
            .iter()
            .find(|(_, o)| *o == v)
            .map(|(n, _)| *n)
            .expect("default is listed");
        self.manifest.push((key.to_string(), name.to_string()));
        Ok(v)
    }

    /// Marks keys as known without resolving them.
    pub fn ignore(&mut self, keys: &[&str]) {
        for k in keys {
            self.used.insert(k.to_string());
        }
    }

    /// Fails on keys that were set but never read; returns the manifest entries.
    pub fn finish(self) -> Result<Vec<(String, String)>> {
        let unknown: Vec<&String> = self
            .settings
            .values
            .keys()
            .filter(|k| !self.used.contains(*k))
            .collect();
        if let Some(k) = unknown.first() {
            return Err(CliError::option(k, "unknown option for this model and command"));
        }
        Ok(self.manifest)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Univariate,
    Multivariate,
}

const MODELS: &[(&str, ModelKind)] = &[
    ("univariate", ModelKind::Univariate),
    ("multivariate", ModelKind::Multivariate),
];

// Built once per run; boxing the larger variant would buy nothing.
#[allow(clippy::large_enum_variant)]
#[derive(Clone, Debug, PartialEq)]
pub enum ModelSpec {
    Univariate {
        prior: PriorSpec,
        proposal: ProposalConfig,
    },
    Multivariate {
        q: usize,
        prior: MvPriorSpec,
        proposal: MvProposalConfig,
    },
}

impl ModelSpec {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelSpec::Univariate { .. } => ModelKind::Univariate,
            ModelSpec::Multivariate { .. } => ModelKind::Multivariate,
        }
    }

    /// Latent dimension.
    pub fn q(&self) -> usize {
        match self {
            ModelSpec::Univariate { .. } => 1,
            ModelSpec::Multivariate { q, .. } => *q,
        }
    }
}

/// Every science parameter of a fit.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub n: usize,
    pub grid_lo: f64,
    pub grid_hi: f64,
    pub iters: usize,
    pub burnin: usize,
    pub thin: usize,
    pub seed: u64,
    pub chains: usize,
    pub hpd_mass: f64,
    pub forecast_k: usize,
}

/// Keys that belong to the command line rather than to the model.
pub const PLUMBING_KEYS: &[&str] = &["data", "out"];

impl RunConfig {
    /// Resolves the configuration for data with `p` observed coordinates.
    pub fn resolve(settings: &Settings, p: usize) -> Result<(Self, Vec<(String, String)>)> {
        let mut r = Resolver::new(settings);
        r.ignore(PLUMBING_KEYS);
        let default_model = if p == 1 {
            ModelKind::Univariate
        } else {
            ModelKind::Multivariate
        };
        let kind = r.choice("model", default_model, MODELS)?;
        let model = match kind {
            ModelKind::Univariate => {
                if p != 1 {
                    return Err(CliError::option(
                        "model",
                        format!("the univariate model needs p = 1, data has p = {p}"),
                    ));
                }
                ModelSpec::Univariate {
                    proposal: univariate_proposal(&mut r)?,
                    prior: univariate_prior(&mut r)?,
                }
            }
            ModelKind::Multivariate => {
                let q = r.value("q", p)?;
                if q == 0 {
                    return Err(CliError::option("q", "must be at least 1"));
                }
                ModelSpec::Multivariate {
                    q,
                    proposal: multivariate_proposal(&mut r)?,
                    prior: multivariate_prior(&mut r, p, q)?,
                }
            }
        };
        let cfg = RunConfig {
            model,
            n: r.value("n", 30)?,
            grid_lo: r.value("grid_lo", -30.0)?,
            grid_hi: r.value("grid_hi", 30.0)?,
            iters: r.value("iters", 6000)?,
            burnin: r.value("burnin", 1000)?,
            thin: r.value("thin", 1)?,
            seed: r.value("seed", 0)?,
            chains: r.value("chains", 1)?,
            hpd_mass: r.value("hpd_mass", 0.95)?,
            forecast_k: r.value("forecast_k", 1)?,
        };
        let manifest = r.finish()?;
        cfg.validate()?;
        Ok((cfg, manifest))
    }

    pub fn validate(&self) -> Result<()> {
        if self.iters <= self.burnin {
            return Err(CliError::option(
                "iters",
                format!("must exceed burnin = {}", self.burnin),
            ));
        }
        if self.thin == 0 {
            return Err(CliError::option("thin", "must be at least 1"));
        }
        if self.chains == 0 {
            return Err(CliError::option("chains", "must be at least 1"));
        }
        if self.n == 0 {
            return Err(CliError::option("n", "must be at least 1"));
        }
        if !(self.grid_lo < self.grid_hi) || !self.grid_lo.is_finite() || !self.grid_hi.is_finite() {
            return Err(CliError::option(
                "grid_lo",
                format!("grid range [{}, {}] is empty", self.grid_lo, self.grid_hi),
            ));
        }
        if !(self.hpd_mass > 0.0 && self.hpd_mass < 1.0) {
            return Err(CliError::option("hpd_mass", "must lie in (0, 1)"));
        }
        if self.forecast_k == 0 {
            return Err(CliError::option("forecast_k", "must be at least 1"));
        }
        match &self.model {
            ModelSpec::Univariate { prior, proposal } => {
                prior.validate()?;
                proposal.validate()?;
            }
            ModelSpec::Multivariate { prior, proposal, .. } => {
                prior.validate()?;
                proposal.validate()?;
            }
        }
        Ok(())
    }

    /// Retained draws per chain.
    pub fn retained(&self) -> usize {
        (self.iters - self.burnin) / self.thin
    }
}

fn univariate_proposal(r: &mut Resolver) -> Result<ProposalConfig> {
    let d = ProposalConfig::default();
    Ok(ProposalConfig {
        rw_sd_sigma: r.value("rw_sd_sigma", d.rw_sd_sigma)?,
        rw_sd_smooth: r.value("rw_sd_smooth", d.rw_sd_smooth)?,
        x_proposal: r.choice(
            "x_proposal",
            d.x_proposal,
            &[
                ("linearized", XProposal::Linearized),
                ("random_walk", XProposal::RandomWalk),
                ("time_scaled", XProposal::TimeScaled),
            ],
        )?,
        rw_var_x: r.value("rw_var_x", d.rw_var_x)?,
        x0_proposal: r.choice(
            "x0_proposal",
            d.x0_proposal,
            &[
                ("linearized", X0Proposal::Linearized),
                ("random_walk", X0Proposal::RandomWalk),
            ],
        )?,
        rw_var_x0: r.value("rw_var_x0", d.rw_var_x0)?,
        variance_proposal: r.choice(
            "variance_proposal",
            d.variance_proposal,
            &[
                ("random_walk", VarianceProposal::RandomWalk),
                ("linearized_inverse_gamma", VarianceProposal::LinearizedInverseGamma),
            ],
        )?,
        // 0 disables the translation move.
        shift_sd: Some(r.value("shift_sd", d.shift_sd.unwrap_or(0.0))?).filter(|v| *v != 0.0),
    })
}

/// A matrix given as a multiple of the identity.
fn scaled_identity(r: &mut Resolver, key: &str, default: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = default.nrows();
    let c = default[(0, 0)];
    if default != &(DMatrix::identity(d, d) * c) {
        return Err(CliError::option(key, "default is not a multiple of the identity"));
    }
    let v = r.value(key, c)?;
    Ok(DMatrix::identity(d, d) * v)
}

fn indexed(r: &mut Resolver, key: &str, default: &[f64]) -> Result<Vec<f64>> {
    default
        .iter()
        .enumerate()
        .map(|(i, d)| r.value(&format!("{key}_{}", i + 1), *d))
        .collect()
}

fn univariate_prior(r: &mut Resolver) -> Result<PriorSpec> {
    let d = PriorSpec::default();
    let pair = |v: Vec<f64>| [v[0], v[1]];
    Ok(PriorSpec {
        mu_r_f: pair(indexed(r, "mu_r_f", &d.mu_r_f)?),
        s2_r_f: pair(indexed(r, "s2_r_f", &d.s2_r_f)?),
        mu_r_g: pair(indexed(r, "mu_r_g", &d.mu_r_g)?),
        s2_r_g: pair(indexed(r, "s2_r_g", &d.s2_r_g)?),
        alpha_f: r.value("alpha_f", d.alpha_f)?,
        gamma_f: r.value("gamma_f", d.gamma_f)?,
        alpha_g: r.value("alpha_g", d.alpha_g)?,
        gamma_g: r.value("gamma_g", d.gamma_g)?,
        alpha_eps: r.value("alpha_eps", d.alpha_eps)?,
        gamma_eps: r.value("gamma_eps", d.gamma_eps)?,
        alpha_eta: r.value("alpha_eta", d.alpha_eta)?,
        gamma_eta: r.value("gamma_eta", d.gamma_eta)?,
        beta_f0: DVector::from_vec(indexed(r, "beta_f0", d.beta_f0.as_slice())?),
        sigma_beta_f0: scaled_identity(r, "sigma_beta_f0", &d.sigma_beta_f0)?,
        beta_g0: DVector::from_vec(indexed(r, "beta_g0", d.beta_g0.as_slice())?),
        sigma_beta_g0: scaled_identity(r, "sigma_beta_g0", &d.sigma_beta_g0)?,
        mu_x0: r.value("mu_x0", d.mu_x0)?,
        s2_x0: r.value("s2_x0", d.s2_x0)?,
    })
}

fn multivariate_proposal(r: &mut Resolver) -> Result<MvProposalConfig> {
    let d = MvProposalConfig::default();
    Ok(MvProposalConfig {
        cov_proposal: r.choice(
            "cov_proposal",
            d.cov_proposal,
            &[
                ("cholesky_walk", CovProposal::CholeskyWalk),
                ("inverse_wishart", CovProposal::InverseWishart),
            ],
        )?,
        rw_sd_chol: r.value("rw_sd_chol", d.rw_sd_chol)?,
        rw_sd_smooth: r.value("rw_sd_smooth", d.rw_sd_smooth)?,
        g_block_proposal: r.choice(
            "g_block_proposal",
            d.g_block_proposal,
            &[
                ("tmcmc", GBlockProposal::Tmcmc),
                ("independence", GBlockProposal::Independence),
            ],
        )?,
        tmcmc_var: r.value("tmcmc_var", d.tmcmc_var)?,
        x_proposal: r.choice(
            "x_proposal",
            d.x_proposal,
            &[
                ("linearized", MvXProposal::Linearized),
                ("random_walk", MvXProposal::RandomWalk),
                ("tmcmc", MvXProposal::Tmcmc),
            ],
        )?,
        rw_var_x: r.value("rw_var_x", d.rw_var_x)?,
        x0_proposal: r.choice(
            "x0_proposal",
            d.x0_proposal,
            &[
                ("linearized", MvX0Proposal::Linearized),
                ("random_walk", MvX0Proposal::RandomWalk),
            ],
        )?,
        rw_var_x0: r.value("rw_var_x0", d.rw_var_x0)?,
    })
}

fn multivariate_prior(r: &mut Resolver, p: usize, q: usize) -> Result<MvPriorSpec> {
    let d = MvPriorSpec::new(p, q);
    let mu_x0 = r.value("mu_x0", d.mu_x0[0])?;
    Ok(MvPriorSpec {
        nu_eps: r.value("nu_eps", d.nu_eps)?,
        sigma_eps0: scaled_identity(r, "sigma_eps0", &d.sigma_eps0)?,
        nu_eta: r.value("nu_eta", d.nu_eta)?,
        sigma_eta0: scaled_identity(r, "sigma_eta0", &d.sigma_eta0)?,
        nu_f: r.value("nu_f", d.nu_f)?,
        sigma_f0: scaled_identity(r, "sigma_f0", &d.sigma_f0)?,
        nu_g: r.value("nu_g", d.nu_g)?,
        sigma_g0: scaled_identity(r, "sigma_g0", &d.sigma_g0)?,
        b_f0: d.b_f0.clone(),
        sigma_bf0: scaled_identity(r, "sigma_bf0", &d.sigma_bf0)?,
        b_g0: d.b_g0.clone(),
        sigma_bg0: scaled_identity(r, "sigma_bg0", &d.sigma_bg0)?,
        psi: r.value("psi", d.psi)?,
        b_prior_scale: r.choice(
            "b_prior_scale",
            d.b_prior_scale,
            &[("conditional", BPriorScale::Conditional), ("fixed", BPriorScale::Fixed)],
        )?,
        mu_r_f: indexed(r, "mu_r_f", &d.mu_r_f)?,
        s2_r_f: indexed(r, "s2_r_f", &d.s2_r_f)?,
        mu_r_g: indexed(r, "mu_r_g", &d.mu_r_g)?,
        s2_r_g: indexed(r, "s2_r_g", &d.s2_r_g)?,
        mu_x0: DVector::from_element(q, mu_x0),
        sigma_x0: scaled_identity(r, "sigma_x0", &d.sigma_x0)?,
    })
}
