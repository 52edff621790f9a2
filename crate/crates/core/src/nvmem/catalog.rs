//! Non-volatile memory technology catalog.
//!
//! Currents are stored in microamps so that every catalog entry, including
//! the 0.15 mA ReRAM write current, is an exact integer. Energies come out
//! in integer femtojoules: µA · ns · mV is 10⁻¹⁸ J, divided by 1000.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Technology {
    FeRam,
    Mram,
    NvSram,
    ReRam,
    Pram,
    Custom,
}

impl Technology {
    pub const CATALOGED: [Technology; 5] = [
        Technology::FeRam,
        Technology::Mram,
        Technology::NvSram,
        Technology::ReRam,
        Technology::Pram,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Technology::FeRam => "FeRAM",
            Technology::Mram => "MRAM",
            Technology::NvSram => "nvSRAM",
            Technology::ReRam => "ReRAM",
            Technology::Pram => "PRAM",
            Technology::Custom => "custom",
        }
    }
}

impl fmt::Display for Technology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown technology `{0}`; valid names: FeRAM, MRAM, nvSRAM, ReRAM, PRAM, custom")]
pub struct UnknownTechnology(pub String);

impl FromStr for Technology {
    type Err = UnknownTechnology;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        Technology::CATALOGED
            .into_iter()
            .chain([Technology::Custom])
            .find(|t| t.name().to_ascii_lowercase() == lower)
            .ok_or_else(|| UnknownTechnology(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Read,
    Write,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemTechParams {
    pub technology: Technology,
    pub read_ns: u64,
    pub write_ns: u64,
    pub read_ua: u64,
    pub write_ua: u64,
    pub standby_ua: u64,
    pub sleep_ua: u64,
    /// The sleep current is not published and was copied from standby.
    pub sleep_defaulted: bool,
    pub vdd_mv: u64,
    /// `None` means unlimited.
    pub endurance_cycles: Option<u64>,
    pub retention_years: u32,
    /// Process node, informational only.
    pub process_nm: Option<u32>,
}

pub const DEFAULT_VDD_MV: u64 = 3300;

/// Table of published parameters for a cataloged technology.
pub fn tech_params(technology: Technology) -> Result<MemTechParams, UnknownTechnology> {
    #[allow(clippy::type_complexity)]
    let (read_ns, write_ns, read_ua, write_ua, standby_ua, sleep_ua, endurance, retention, nm): (
        u64,
        u64,
        u64,
        u64,
        u64,
        Option<u64>,
        Option<u64>,
        u32,
        Option<u32>,
    ) = match technology {
        Technology::FeRam => (55, 55, 8_000, 8_000, 90, Some(5), Some(1_000_000_000_000_000), 10, Some(130)),
        Technology::Mram => (35, 35, 55_000, 105_000, 18_000, None, Some(100_000_000), 20, Some(14)),
        Technology::NvSram => (10, 10, 3_000, 3_000, 250, Some(8), None, 20, None),
        Technology::ReRam => (10, 50, 1_500, 150, 60, Some(6), Some(1_000_000), 10, Some(28)),
        Technology::Pram => (115, 115, 30_000, 15_000, 80, None, Some(1_000_000), 10, Some(90)),
        Technology::Custom => return Err(UnknownTechnology("custom".into())),
    };
    Ok(MemTechParams {
        technology,
        read_ns,
        write_ns,
        read_ua,
        write_ua,
        standby_ua,
        sleep_ua: sleep_ua.unwrap_or(standby_ua),
        sleep_defaulted: sleep_ua.is_none(),
        vdd_mv: DEFAULT_VDD_MV,
        endurance_cycles: endurance,
        retention_years: retention,
        process_nm: nm,
    })
}

pub fn tech_params_by_name(name: &str) -> Result<MemTechParams, UnknownTechnology> {
    tech_params(name.parse()?)
}

impl MemTechParams {
    /// Access delay used for an NVR built from this technology: the slower
    /// of the read and write access times.
    pub fn access_delay_ns(&self) -> u64 {
        self.read_ns.max(self.write_ns)
    }
}

/// Energy of one access, current · access time · supply, in femtojoules
/// (rounded half up when the product is not a whole femtojoule).
pub fn access_energy(params: &MemTechParams, op: OpKind) -> u64 {
    let (ua, ns) = match op {
        OpKind::Read => (params.read_ua, params.read_ns),
        OpKind::Write => (params.write_ua, params.write_ns),
    };
    let attojoules = u128::from(ua) * u128::from(ns) * u128::from(params.vdd_mv);
    ((attojoules + 500) / 1000) as u64
}

/// Years until `endurance_cycles` writes are used up at a steady rate,
/// with 365-day years.
pub fn endurance_lifetime_years(endurance_cycles: f64, writes_per_second: f64) -> Option<f64> {
    const SECONDS_PER_YEAR: f64 = 365.0 * 24.0 * 3600.0;
    if writes_per_second.is_nan() || writes_per_second <= 0.0 {
        return None;
    }
    Some(endurance_cycles / writes_per_second / SECONDS_PER_YEAR)
}

/// Formats an integer number of thousandths without trailing zeros, e.g.
/// 6_352_500 -> "6352.5".
pub fn format_milli(value: u64) -> String {
    let whole = value / 1000;
    let frac = value % 1000;
    if frac == 0 {
        return whole.to_string();
    }
    let digits = format!("{frac:03}");
    format!("{whole}.{}", digits.trim_end_matches('0'))
}

pub const CATALOG_CSV_HEADER: &str = "technology,read_ns,write_ns,read_ma,write_ma,standby_ua,sleep_ua,sleep_defaulted,vdd_mv,endurance_cycles,retention_years,process_nm,read_energy_pj,write_energy_pj";

/// The full catalog as CSV, one row per cataloged technology.
pub fn catalog_csv() -> String {
    let mut out = String::from(CATALOG_CSV_HEADER);
    out.push('\n');
    for tech in Technology::CATALOGED {
        let p = tech_params(tech).expect("cataloged");
        out.push_str(&catalog_row(&p));
        out.push('\n');
    }
    out
}

pub fn catalog_row(p: &MemTechParams) -> String {
    [
        p.technology.name().to_string(),
        p.read_ns.to_string(),
        p.write_ns.to_string(),
        format_milli(p.read_ua),
        format_milli(p.write_ua),
        p.standby_ua.to_string(),
        p.sleep_ua.to_string(),
        p.sleep_defaulted.to_string(),
        p.vdd_mv.to_string(),
        p.endurance_cycles
            .map_or_else(|| "unlimited".to_string(), |e| e.to_string()),
        p.retention_years.to_string(),
        p.process_nm.map(|n| n.to_string()).unwrap_or_default(),
        format_milli(access_energy(p, OpKind::Read)),
        format_milli(access_energy(p, OpKind::Write)),
    ]
    .join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feram_and_reram_entries() {
        let fe = tech_params(Technology::FeRam).unwrap();
        assert_eq!((fe.read_ns, fe.read_ua), (55, 8_000));
        assert_eq!((fe.standby_ua, fe.sleep_ua), (90, 5));
        let re = tech_params_by_name("ReRAM").unwrap();
        assert_eq!((re.write_ns, re.write_ua), (50, 150));
    }

    #[test]
    fn unknown_names_list_valid_ones() {
        let err = tech_params_by_name("FLASH").unwrap_err();
        assert!(err.to_string().contains("FeRAM, MRAM, nvSRAM, ReRAM, PRAM"));
        assert!(tech_params(Technology::Custom).is_err());
    }

    #[test]
    fn names_parse_case_insensitively() {
        assert_eq!("nvsram".parse::<Technology>().unwrap(), Technology::NvSram);
        assert_eq!("FeRAM".parse::<Technology>().unwrap(), Technology::FeRam);
    }

    #[test]
    fn missing_sleep_currents_are_flagged() {
        let mram = tech_params(Technology::Mram).unwrap();
        assert!(mram.sleep_defaulted);
        assert_eq!(mram.sleep_ua, mram.standby_ua);
        assert!(!tech_params(Technology::FeRam).unwrap().sleep_defaulted);
    }

    #[test]
    fn access_energy_examples() {
        let fe = tech_params(Technology::FeRam).unwrap();
        assert_eq!(access_energy(&fe, OpKind::Read), 1_452_000);
        let re = tech_params(Technology::ReRam).unwrap();
        assert_eq!(access_energy(&re, OpKind::Write), 24_750);
        let zero = MemTechParams { read_ua: 0, ..fe };
        assert_eq!(access_energy(&zero, OpKind::Read), 0);
    }

    #[test]
    fn lifetime() {
        let y = endurance_lifetime_years(1e15, 150_000.0).unwrap();
        assert!((y - 211.4).abs() < 0.05, "{y}");
        let tiny = endurance_lifetime_years(1e15, 1e15).unwrap();
        assert!((tiny - 1.0 / 31_536_000.0).abs() < 1e-15);
        assert_eq!(endurance_lifetime_years(1e15, 0.0), None);
    }

    #[test]
    fn milli_formatting() {
        assert_eq!(format_milli(6_352_500), "6352.5");
        assert_eq!(format_milli(24_750), "24.75");
        assert_eq!(format_milli(150), "0.15");
        assert_eq!(format_milli(99_000), "99");
    }

    #[test]
    fn catalog_csv_shape() {
        let csv = catalog_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 6);
        assert_eq!(lines[0], CATALOG_CSV_HEADER);
        assert!(lines[4].starts_with("ReRAM,10,50,1.5,0.15,60,6,false,3300,1000000,10,28,49.5,24.75"));
        assert!(lines[3].contains(",unlimited,"));
    }
}
