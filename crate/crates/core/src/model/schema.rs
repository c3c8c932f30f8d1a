//! On-disk model document. Field names carry their units.

use serde::{Deserialize, Serialize};

use crate::dynamics::ImpedanceParams;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDoc {
    pub format_version: u32,
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// When set, the model must bind exactly 16 actuators.
    #[serde(default)]
    pub full_robot: bool,
    pub joints: Vec<JointDoc>,
    pub actuators: Vec<ActuatorDoc>,
    pub mechanisms: Vec<MechanismDoc>,
    #[serde(default)]
    pub variants: VariantSpec,
    #[serde(default)]
    pub impedance: Option<ImpedanceParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointDoc {
    pub name: String,
    pub nominal_rad: f64,
    pub limits_rad: [f64; 2],
    pub inertia_kgm2: f64,
    #[serde(default)]
    pub damping_nms_per_rad: f64,
    /// Constant load torque, e.g. a gravity stand-in.
    #[serde(default)]
    pub bias_torque_nm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActuatorDoc {
    pub name: String,
    pub joint: String,
    pub kp_nm_per_rad: f64,
    pub kd_nms_per_rad: f64,
    #[serde(default)]
    pub torque_limit_nm: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    #[default]
    Loop,
    Polynomial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MechanismDoc {
    Serial {
        name: String,
        joint: String,
    },
    Differential {
        name: String,
        rho_left: f64,
        rho_right: f64,
        motor_left: String,
        motor_right: String,
        roll: String,
        pitch: String,
    },
    FiveBar {
        name: String,
        /// `[l1, l2, l3, l4]`.
        lengths_m: [f64; 4],
        base_separation_m: f64,
        /// Orientation of the linkage plane in the leg frame.
        #[serde(default)]
        plane_rpy_rad: [f64; 3],
        /// Marks the chain endpoint as a foot, with its label.
        #[serde(default)]
        foot: Option<String>,
        theta1: String,
        theta2: String,
        theta3: String,
        theta4: String,
    },
    FourBar {
        name: String,
        /// `[L0 ground, L1 input, L2 coupler, L3 output]`.
        lengths_m: [f64; 4],
        input: String,
        coupler: String,
        output: String,
        input_limits_rad: [f64; 2],
        #[serde(default)]
        representation: Representation,
        #[serde(default = "default_degree")]
        degree: usize,
    },
}

fn default_degree() -> usize {
    5
}

impl MechanismDoc {
    pub fn name(&self) -> &str {
        match self {
            MechanismDoc::Serial { name, .. }
            | MechanismDoc::Differential { name, .. }
            | MechanismDoc::FiveBar { name, .. }
            | MechanismDoc::FourBar { name, .. } => name,
        }
    }
}

/// Which closed chains are simulated as closed; the rest are serialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantSpec {
    pub enable_fourbar: bool,
    pub enable_fivebar: bool,
    pub enable_differential: bool,
}

impl Default for VariantSpec {
    fn default() -> Self {
        Self::all()
    }
}

impl VariantSpec {
    pub const fn simplified() -> Self {
        Self { enable_fourbar: false, enable_fivebar: false, enable_differential: false }
    }

    pub const fn all() -> Self {
        Self { enable_fourbar: true, enable_fivebar: true, enable_differential: true }
    }

    pub const fn four_bar_only() -> Self {
        Self { enable_fourbar: true, ..Self::simplified() }
    }

    pub const fn five_bar_only() -> Self {
        Self { enable_fivebar: true, ..Self::simplified() }
    }

    pub const fn differential_only() -> Self {
        Self { enable_differential: true, ..Self::simplified() }
    }

    /// The five benchmark columns, baseline first.
    pub fn table() -> [VariantSpec; 5] {
        [Self::simplified(), Self::four_bar_only(), Self::five_bar_only(), Self::differential_only(), Self::all()]
    }

    pub fn name(&self) -> String {
        match (self.enable_fourbar, self.enable_fivebar, self.enable_differential) {
            (false, false, false) => "Simplified".into(),
            (true, false, false) => "4-Bar".into(),
            (false, true, false) => "5-Bar".into(),
            (false, false, true) => "Differential".into(),
            (true, true, true) => "All".into(),
            (a, b, c) => {
                let mut parts = Vec::new();
                if a {
                    parts.push("4-Bar");
                }
                if b {
                    parts.push("5-Bar");
                }
                if c {
                    parts.push("Differential");
                }
                parts.join("+")
            }
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        let lower = name.trim().to_ascii_lowercase();
        match lower.as_str() {
            "simplified" | "serial" => Some(Self::simplified()),
            "4-bar" | "fourbar" | "four_bar" => Some(Self::four_bar_only()),
            "5-bar" | "fivebar" | "five_bar" => Some(Self::five_bar_only()),
            "differential" | "diff" => Some(Self::differential_only()),
            "all" => Some(Self::all()),
            _ => None,
        }
    }
}
