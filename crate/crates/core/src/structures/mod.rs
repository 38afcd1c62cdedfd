//! Parsimonious covariance structures built from the eigen decomposition
//! `λ Γ Δ Γᵀ` (volume, orientation, shape).
//!
//! Fourteen structures constrain the row covariance `Σ`; seven volume-free
//! structures constrain the unit-determinant column covariance `Ψ`. Each
//! letter of a name says whether the corresponding component is Equal across
//! states, Variable across states, or the Identity.

mod mm;
mod psi;
mod sigma;
mod spectral;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

pub use mm::{mm_objective, mm_orientation, MmOutcome};
pub use psi::update_psi;
pub use sigma::update_sigma;
pub use spectral::{CovarianceUpdate, ScatterSet, SpectralParts, UpdateOptions};

/// Row covariance structures, in the order of the usual GPCM table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SigmaStructure {
    EII,
    VII,
    EEI,
    VEI,
    EVI,
    VVI,
    EEE,
    VEE,
    EVE,
    VVE,
    EEV,
    VEV,
    EVV,
    VVV,
}

/// Column covariance structures; the volume is fixed by `|Ψ| = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PsiStructure {
    II,
    EI,
    VI,
    EE,
    VE,
    EV,
    VV,
}

impl SigmaStructure {
    pub const ALL: [SigmaStructure; 14] = [
        Self::EII,
        Self::VII,
        Self::EEI,
        Self::VEI,
        Self::EVI,
        Self::VVI,
        Self::EEE,
        Self::VEE,
        Self::EVE,
        Self::VVE,
        Self::EEV,
        Self::VEV,
        Self::EVV,
        Self::VVV,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::EII => "EII",
            Self::VII => "VII",
            Self::EEI => "EEI",
            Self::VEI => "VEI",
            Self::EVI => "EVI",
            Self::VVI => "VVI",
            Self::EEE => "EEE",
            Self::VEE => "VEE",
            Self::EVE => "EVE",
            Self::VVE => "VVE",
            Self::EEV => "EEV",
            Self::VEV => "VEV",
            Self::EVV => "EVV",
            Self::VVV => "VVV",
        }
    }

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&s| s == self).unwrap()
    }

    /// Free parameters in `Σ_1, …, Σ_K` for a `q x q` covariance.
    pub fn count_params(self, k: usize, q: usize) -> usize {
        let orient = q * (q - 1) / 2;
        match self {
            Self::EII => 1,
            Self::VII => k,
            Self::EEI => q,
            Self::VEI => k + q - 1,
            Self::EVI => k * (q - 1) + 1,
            Self::VVI => k * q,
            Self::EEE => q * (q + 1) / 2,
            Self::VEE => q * (q + 1) / 2 + k - 1,
            Self::EVE => orient + k * (q - 1) + 1,
            Self::VVE => orient + k * q,
            Self::EEV => k * orient + q,
            Self::VEV => k * orient + k + q - 1,
            Self::EVV => k * q * (q + 1) / 2 - k + 1,
            Self::VVV => k * q * (q + 1) / 2,
        }
    }
}

impl PsiStructure {
    pub const ALL: [PsiStructure; 7] = [Self::II, Self::EI, Self::VI, Self::EE, Self::VE, Self::EV, Self::VV];

    pub fn name(self) -> &'static str {
        match self {
            Self::II => "II",
            Self::EI => "EI",
            Self::VI => "VI",
            Self::EE => "EE",
            Self::VE => "VE",
            Self::EV => "EV",
            Self::VV => "VV",
        }
    }

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&s| s == self).unwrap()
    }

    /// Free parameters in `Ψ_1, …, Ψ_K` for a unit-determinant `q x q` covariance:
    /// the matching row-structure count without its volume parameters.
    pub fn count_params(self, k: usize, q: usize) -> usize {
        match self {
            Self::II => 0,
            Self::EI => q - 1,
            Self::VI => k * (q - 1),
            Self::EE => q * (q + 1) / 2 - 1,
            Self::VE => q * (q - 1) / 2 + k * (q - 1),
            Self::EV => k * q * (q - 1) / 2 + q - 1,
            Self::VV => k * q * (q + 1) / 2 - k,
        }
    }
}

pub fn count_sigma_params(structure: SigmaStructure, k: usize, q: usize) -> usize {
    structure.count_params(k, q)
}

pub fn count_psi_params(structure: PsiStructure, k: usize, q: usize) -> usize {
    structure.count_params(k, q)
}

/// One of the 98 models, written `"VVE-VE"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StructurePair {
    pub sigma: SigmaStructure,
    pub psi: PsiStructure,
}

impl StructurePair {
    pub fn new(sigma: SigmaStructure, psi: PsiStructure) -> Self {
        Self { sigma, psi }
    }

    /// All 98 pairs, row structure major.
    pub fn all() -> Vec<StructurePair> {
        SigmaStructure::ALL
            .iter()
            .flat_map(|&s| PsiStructure::ALL.iter().map(move |&p| StructurePair::new(s, p)))
            .collect()
    }

    pub fn valid_names() -> String {
        Self::all().iter().map(|s| s.to_string()).collect::<Vec<_>>().join(", ")
    }
}

macro_rules! impl_name_traits {
    ($ty:ty) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let upper = s.trim().to_ascii_uppercase();
                Self::ALL.iter().copied().find(|v| v.name() == upper).ok_or_else(|| Error::UnknownStructure {
                    name: s.to_string(),
                    valid: Self::ALL.iter().map(|v| v.name()).collect::<Vec<_>>().join(", "),
                })
            }
        }

        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(self.name())
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

impl_name_traits!(SigmaStructure);
impl_name_traits!(PsiStructure);

impl fmt::Display for StructurePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.sigma, self.psi)
    }
}

impl FromStr for StructurePair {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let unknown = || Error::UnknownStructure {
            name: s.to_string(),
            valid: StructurePair::valid_names(),
        };
        let (a, b) = s.trim().split_once('-').ok_or_else(unknown)?;
        let sigma = a.parse().map_err(|_| unknown())?;
        let psi = b.parse().map_err(|_| unknown())?;
        Ok(StructurePair { sigma, psi })
    }
}

impl Serialize for StructurePair {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for StructurePair {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
