//! Scenario files: TOML with an explicit unit on every physical quantity.
//!
//! Quantities are strings such as `"4 um"`, `"500 Hz"` or `"2.5e-16 A^2*s"`.
//! Frequencies in Hz are cyclic and are converted to rad/s. Everything is
//! stored in SI and written back as `"<value> <SI unit>"`, so a serialized
//! config re-parses to identical numbers. Unknown keys are rejected.

use std::fmt;
use std::marker::PhantomData;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::condensate::TrapConfig;
use crate::counting::DetectionConfig;
use crate::error::{Error, Result};
use crate::inversion::Regularizer;
use crate::io::CONFIG_PREFIX;
use crate::kernel::{KernelMode, KernelSettings};
use crate::nanowire::NanowireConfig;
use crate::oracle::GridSize;
use crate::spectra::{NoiseSpectrumModel, Regime};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

pub trait Dimension {
    const NAME: &'static str;
    /// SI unit written on output.
    const SI: &'static str;
    /// Accepted units as (name, multiplier, power of ten) relative to SI.
    fn units() -> &'static [(&'static str, f64, i32)];
}

macro_rules! dimension {
    ($ty:ident, $name:expr, $si:expr, [$(($u:expr, $f:expr, $e:expr)),* $(,)?]) => {
        #[derive(Debug, Clone, Copy, PartialEq)]
        pub struct $ty;
        impl Dimension for $ty {
            const NAME: &'static str = $name;
            const SI: &'static str = $si;
            fn units() -> &'static [(&'static str, f64, i32)] {
                &[$(($u, $f, $e)),*]
            }
        }
    };
}

dimension!(LengthDim, "length", "m", [("m", 1.0, 0), ("mm", 1.0, -3), ("um", 1.0, -6), ("µm", 1.0, -6), ("nm", 1.0, -9)]);
dimension!(AngularFrequencyDim, "angular frequency", "rad/s", [
    ("rad/s", 1.0, 0), ("krad/s", 1.0, 3), ("Hz", TWO_PI, 0), ("kHz", TWO_PI, 3), ("MHz", TWO_PI, 6), ("GHz", TWO_PI, 9),
]);
dimension!(TimeDim, "time", "s", [("s", 1.0, 0), ("ms", 1.0, -3), ("us", 1.0, -6), ("µs", 1.0, -6), ("ns", 1.0, -9)]);
dimension!(FieldDim, "magnetic field", "T", [("T", 1.0, 0), ("mT", 1.0, -3), ("uT", 1.0, -6), ("µT", 1.0, -6), ("G", 1.0, -4), ("mG", 1.0, -7)]);
dimension!(CurrentDim, "current", "A", [("A", 1.0, 0), ("mA", 1.0, -3), ("uA", 1.0, -6), ("µA", 1.0, -6), ("nA", 1.0, -9)]);
dimension!(CurrentSquaredDim, "current squared", "A^2", [("A^2", 1.0, 0), ("mA^2", 1.0, -6), ("uA^2", 1.0, -12), ("nA^2", 1.0, -18)]);
dimension!(SpectralDensityDim, "spectral density", "A^2*s", [("A^2*s", 1.0, 0), ("A^2/(rad/s)", 1.0, 0), ("uA^2*s", 1.0, -12), ("nA^2*s", 1.0, -18)]);
dimension!(TemperatureDim, "temperature", "K", [("K", 1.0, 0), ("mK", 1.0, -3), ("uK", 1.0, -6), ("µK", 1.0, -6), ("nK", 1.0, -9)]);

/// A physical value held in SI units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantity<D> {
    pub si: f64,
    _dim: PhantomData<D>,
}

impl<D: Dimension> Quantity<D> {
    pub fn new(si: f64) -> Self {
        Self { si, _dim: PhantomData }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let t = text.trim();
        let split = t
            .find(|c: char| c.is_whitespace())
            .ok_or_else(|| Error::Parse(format!("'{t}' has no unit; expected a {} such as '1 {}'", D::NAME, D::SI)))?;
        let (num, unit) = (t[..split].trim(), t[split..].trim());
        let value: f64 = num
            .parse()
            .map_err(|_| Error::Parse(format!("'{num}' is not a number in '{t}'")))?;
        let (mult, exp) = D::units()
            .iter()
            .find(|(u, _, _)| *u == unit)
            .map(|(_, m, e)| (*m, *e))
            .ok_or_else(|| {
                let known: Vec<&str> = D::units().iter().map(|(u, _, _)| *u).collect();
                Error::Parse(format!("unknown {} unit '{unit}' (known: {})", D::NAME, known.join(", ")))
            })?;
        // Dividing by an exact power of ten keeps "50 nK" equal to 5e-8.
        let scaled = if exp < 0 { value / 10f64.powi(-exp) } else { value * 10f64.powi(exp) };
        Ok(Self::new(scaled * mult))
    }
}

impl<D: Dimension> fmt::Display for Quantity<D> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:e} {}", self.si, D::SI)
    }
}

impl<D: Dimension> Serialize for Quantity<D> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de, D: Dimension> Deserialize<'de> for Quantity<D> {
    fn deserialize<De: Deserializer<'de>>(d: De) -> std::result::Result<Self, De::Error> {
        let s = String::deserialize(d)?;
        Quantity::parse(&s).map_err(serde::de::Error::custom)
    }
}

pub type Length = Quantity<LengthDim>;
pub type AngularFrequency = Quantity<AngularFrequencyDim>;
pub type Time = Quantity<TimeDim>;
pub type Field = Quantity<FieldDim>;
pub type Current = Quantity<CurrentDim>;
pub type CurrentSquared = Quantity<CurrentSquaredDim>;
pub type SpectralDensity = Quantity<SpectralDensityDim>;
pub type Temperature = Quantity<TemperatureDim>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrapSection {
    pub omega_r: AngularFrequency,
    pub omega_z: AngularFrequency,
    pub atom_number: f64,
    pub b_offs: Field,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NanowireSection {
    pub length: Length,
    pub distance: Length,
    pub amplitude: Length,
    pub omega_cnt: AngularFrequency,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_offset: Option<Length>,
}

fn default_mode() -> String {
    "exact3d".into()
}
fn default_kernel_points() -> usize {
    401
}
fn default_knots() -> usize {
    KernelSettings::default().shell_knots
}
fn default_polar() -> usize {
    KernelSettings::default().polar_nodes
}
fn default_azimuthal() -> usize {
    KernelSettings::default().azimuthal_nodes
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    #[serde(default = "default_mode")]
    pub mode: String,
    /// Output grid points over [−0.5, 1.5] μ/ħ.
    #[serde(default = "default_kernel_points")]
    pub points: usize,
    #[serde(default = "default_knots")]
    pub shell_knots: usize,
    #[serde(default = "default_polar")]
    pub polar_nodes: usize,
    #[serde(default = "default_azimuthal")]
    pub azimuthal_nodes: usize,
    #[serde(default)]
    pub freeze_u: bool,
    /// Extra atom numbers for a dimensionless kernel family.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep_atom_numbers: Vec<f64>,
}

impl Default for KernelSection {
    fn default() -> Self {
        Self {
            mode: default_mode(),
            points: default_kernel_points(),
            shell_knots: default_knots(),
            polar_nodes: default_polar(),
            azimuthal_nodes: default_azimuthal(),
            freeze_u: false,
            sweep_atom_numbers: Vec::new(),
        }
    }
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSection {
    Flat {
        s0: SpectralDensity,
    },
    Line {
        omega0: AngularFrequency,
        weight: CurrentSquared,
        #[serde(default = "yes")]
        symmetric: bool,
    },
    Lorentzian {
        #[serde(default = "zero_frequency")]
        center: AngularFrequency,
        half_width: AngularFrequency,
        power: CurrentSquared,
    },
    DetailedBalance {
        temperature: Temperature,
        base: Box<ModelSection>,
    },
    Tabulated {
        omega: Vec<AngularFrequency>,
        values: Vec<SpectralDensity>,
    },
}

fn zero_frequency() -> AngularFrequency {
    AngularFrequency::new(0.0)
}

impl ModelSection {
    pub fn to_model(&self) -> NoiseSpectrumModel {
        match self {
            ModelSection::Flat { s0 } => NoiseSpectrumModel::Flat { s0: s0.si },
            ModelSection::Line { omega0, weight, symmetric } => NoiseSpectrumModel::Line {
                omega0: omega0.si,
                weight: weight.si,
                symmetric: *symmetric,
            },
            ModelSection::Lorentzian { center, half_width, power } => NoiseSpectrumModel::Lorentzian {
                center: center.si,
                half_width: half_width.si,
                power: power.si,
            },
            ModelSection::DetailedBalance { temperature, base } => NoiseSpectrumModel::DetailedBalance {
                base: Box::new(base.to_model()),
                temperature: temperature.si,
            },
            ModelSection::Tabulated { omega, values } => NoiseSpectrumModel::Tabulated {
                omega: omega.iter().map(|q| q.si).collect(),
                values: values.iter().map(|q| q.si).collect(),
            },
        }
    }
}

fn default_regime() -> String {
    "long_time".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSection {
    pub t_meas: Time,
    /// Symmetric grid [−omega_max, omega_max].
    pub omega_max: AngularFrequency,
    pub points: usize,
    #[serde(default = "default_regime")]
    pub regime: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionSection {
    pub efficiency: f64,
    pub shots: usize,
}

fn default_threshold() -> f64 {
    3.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    pub ensemble: usize,
    pub t_meas: Time,
    /// Defaults to 1/50 of the process correlation time, rounded to divide T.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<Time>,
    pub omegas: Vec<AngularFrequency>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<[usize; 3]>,
    #[serde(default = "default_threshold")]
    pub z_threshold: f64,
}

fn default_regularizer() -> String {
    "identity".into()
}
fn default_noise_floor() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InversionSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_file: Option<String>,
    /// Unknowns on the ω grid; defaults to the scan step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    /// Fixed λ; the discrepancy principle picks one when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default = "default_regularizer")]
    pub regularizer: String,
    #[serde(default)]
    pub non_negative: bool,
    /// Standard error assumed for noiseless data, relative to max N.
    #[serde(default = "default_noise_floor")]
    pub noise_floor: f64,
}

impl Default for InversionSection {
    fn default() -> Self {
        Self {
            scan_file: None,
            kernel_file: None,
            points: None,
            lambda: None,
            regularizer: default_regularizer(),
            non_negative: false,
            noise_floor: default_noise_floor(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub trap: TrapSection,
    pub nanowire: NanowireSection,
    #[serde(default)]
    pub kernel: KernelSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detection: Option<DetectionSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inversion: Option<InversionSection>,
    #[serde(default)]
    pub run: RunSection,
}

fn missing(section: &str) -> Error {
    Error::invalid(section, "section is required for this command")
}

impl ScenarioConfig {
    /// Parses TOML, or the `#@` lines embedded in an output file.
    pub fn parse(text: &str) -> Result<Self> {
        let embedded: Vec<&str> = text
            .lines()
            .filter_map(|l| l.strip_prefix(CONFIG_PREFIX).or_else(|| (l == "#@").then_some("")))
            .collect();
        let source = if embedded.is_empty() { text.to_string() } else { embedded.join("\n") };
        let cfg: ScenarioConfig = toml::from_str(&source).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
        if crate::io::Format::from_path(path) == crate::io::Format::Json {
            let table = crate::io::Table::read(text.as_bytes(), crate::io::Format::Json)?;
            let embedded = table
                .config
                .ok_or_else(|| Error::Parse(format!("{} embeds no config", path.display())))?;
            return Self::parse(&embedded);
        }
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Checks every section against the preconditions of the modules it feeds.
    pub fn validate(&self) -> Result<()> {
        self.trap_config()?;
        self.nanowire_config()?.validate()?;
        self.kernel_settings()?;
        if self.kernel.points < 2 {
            return Err(Error::invalid("kernel.points", "need at least two points"));
        }
        if let Some(m) = &self.model {
            m.to_model().validate()?;
        }
        if let Some(s) = &self.scan {
            if !(s.t_meas.si > 0.0) {
                return Err(Error::invalid("scan.t_meas", "must be positive"));
            }
            if !(s.omega_max.si > 0.0) || s.points < 2 {
                return Err(Error::invalid("scan", "need omega_max > 0 and at least two points"));
            }
            self.regime()?;
        }
        if let Some(d) = self.detection_config()? {
            d.validate()?;
        }
        if let Some(o) = &self.oracle {
            if o.ensemble == 0 {
                return Err(Error::invalid("oracle.ensemble", "must be positive"));
            }
            if !(o.t_meas.si > 0.0) {
                return Err(Error::invalid("oracle.t_meas", "must be positive"));
            }
            if o.omegas.is_empty() {
                return Err(Error::invalid("oracle.omegas", "need at least one detuning"));
            }
        }
        if let Some(i) = &self.inversion {
            i.regularizer.parse::<Regularizer>().map_err(|e| Error::invalid("inversion.regularizer", e.to_string()))?;
            if !(i.noise_floor > 0.0) {
                return Err(Error::invalid("inversion.noise_floor", "must be positive"));
            }
            if let Some(l) = i.lambda {
                if !(l >= 0.0 && l.is_finite()) {
                    return Err(Error::invalid("inversion.lambda", "must be finite and non-negative"));
                }
            }
        }
        Ok(())
    }

    pub fn trap_config(&self) -> Result<TrapConfig> {
        TrapConfig::new(self.trap.omega_r.si, self.trap.omega_z.si, self.trap.atom_number, self.trap.b_offs.si)
    }

    pub fn nanowire_config(&self) -> Result<NanowireConfig> {
        let n = &self.nanowire;
        let mut cfg = NanowireConfig::new(n.length.si, n.distance.si, n.amplitude.si, n.omega_cnt.si)?;
        if let Some(z) = n.z_offset {
            cfg.z_offset = z.si;
        }
        Ok(cfg)
    }

    pub fn kernel_mode(&self) -> Result<KernelMode> {
        self.kernel.mode.parse().map_err(|e: Error| Error::invalid("kernel.mode", e.to_string()))
    }

    pub fn kernel_settings(&self) -> Result<KernelSettings> {
        let k = &self.kernel;
        if k.shell_knots < 4 || k.polar_nodes == 0 || k.azimuthal_nodes == 0 {
            return Err(Error::invalid("kernel", "need shell_knots >= 4 and positive node counts"));
        }
        Ok(KernelSettings {
            mode: self.kernel_mode()?,
            shell_knots: k.shell_knots,
            polar_nodes: k.polar_nodes,
            azimuthal_nodes: k.azimuthal_nodes,
            freeze_u: k.freeze_u,
        })
    }

    pub fn model(&self) -> Result<NoiseSpectrumModel> {
        Ok(self.model.as_ref().ok_or_else(|| missing("model"))?.to_model())
    }

    pub fn scan_section(&self) -> Result<&ScanSection> {
        self.scan.as_ref().ok_or_else(|| missing("scan"))
    }

    pub fn regime(&self) -> Result<Regime> {
        self.scan_section()?
            .regime
            .parse()
            .map_err(|e: Error| Error::invalid("scan.regime", e.to_string()))
    }

    pub fn detection_config(&self) -> Result<Option<DetectionConfig>> {
        Ok(self.detection.as_ref().map(|d| DetectionConfig {
            efficiency: d.efficiency,
            shots: d.shots,
            seed: self.run.seed,
        }))
    }

    pub fn oracle_section(&self) -> Result<&OracleSection> {
        self.oracle.as_ref().ok_or_else(|| missing("oracle"))
    }

    pub fn oracle_grid(&self) -> Result<GridSize> {
        Ok(match self.oracle_section()?.grid {
            Some([radial, polar, azimuthal]) => GridSize { radial, polar, azimuthal },
            None => GridSize::default(),
        })
    }

    pub fn inversion_section(&self) -> Result<&InversionSection> {
        self.inversion.as_ref().ok_or_else(|| missing("inversion"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const BASE: &str = r#"
[trap]
omega_r = "500 Hz"
omega_z = "109 Hz"
atom_number = 1e5
b_offs = "1 G"

[nanowire]
length = "2 um"
distance = "4 um"
amplitude = "10 nm"
omega_cnt = "50 MHz"
"#;

    #[test]
    fn units_convert_to_si() {
        assert_eq!(Length::parse("4 um").unwrap().si, 4e-6);
        assert_eq!(AngularFrequency::parse("500 Hz").unwrap().si, 2.0 * PI * 500.0);
        assert_eq!(AngularFrequency::parse("3e3 rad/s").unwrap().si, 3e3);
        assert_eq!(Field::parse("1 G").unwrap().si, 1e-4);
        assert_eq!(Temperature::parse("50 nK").unwrap().si, 50e-9);
        assert!(Length::parse("4").is_err());
        assert!(Length::parse("4 Hz").is_err());
        assert!(Length::parse("four um").is_err());
    }

    #[test]
    fn base_config_round_trips() {
        let cfg = ScenarioConfig::parse(BASE).unwrap();
        assert_eq!(cfg.trap.omega_r.si, 2.0 * PI * 500.0);
        assert_eq!(cfg.kernel_mode().unwrap(), KernelMode::Exact3D);
        let text = cfg.to_toml().unwrap();
        assert_eq!(ScenarioConfig::parse(&text).unwrap(), cfg);
        let embedded: String = text.lines().map(|l| format!("#@ {l}\n")).collect();
        assert_eq!(ScenarioConfig::parse(&format!("# a = b\n{embedded}x,y\n1,2\n")).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = format!("{BASE}\n[scan]\nt_meas = \"1 s\"\nomega_max = \"1 kHz\"\npoints = 5\ncolour = 3\n");
        let err = ScenarioConfig::parse(&text).unwrap_err();
        assert!(err.to_string().contains("colour"), "{err}");
    }

    #[test]
    fn nested_model_parses() {
        let text = format!(
            "{BASE}\n[model]\nkind = \"detailed_balance\"\ntemperature = \"100 nK\"\n[model.base]\nkind = \"lorentzian\"\nhalf_width = \"2 kHz\"\npower = \"1 uA^2\"\n"
        );
        let cfg = ScenarioConfig::parse(&text).unwrap();
        match cfg.model().unwrap() {
            NoiseSpectrumModel::DetailedBalance { base, temperature } => {
                assert_eq!(temperature, 100e-9);
                assert!(matches!(*base, NoiseSpectrumModel::Lorentzian { center, .. } if center == 0.0));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn invalid_values_name_the_field() {
        let text = BASE.replace("atom_number = 1e5", "atom_number = -1");
        let err = ScenarioConfig::parse(&text).unwrap_err();
        assert!(err.to_string().contains("trap.atom_number"), "{err}");
    }
}
