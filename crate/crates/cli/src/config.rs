use std::fmt;

use clap::ValueEnum;

#[derive(Clone, Copy, PartialEq, Eq, Debug, ValueEnum)]
pub enum Machine {
    Cek,
    Cesk,
    #[value(name = "ceskstar")]
    CeskStar,
    #[value(name = "ceskt")]
    CeskT,
    Lk,
    LkOpt,
    LkPostponed,
    Ext,
    Cm,
    Kcfa,
    #[value(name = "0cfa")]
    ZeroCfa,
    Alk,
    Acm,
    Aext,
    Pushdown,
}

impl Machine {
    pub fn name(self) -> &'static str {
        use Machine::*;
        match self {
            Cek => "cek",
            Cesk => "cesk",
            CeskStar => "ceskstar",
            CeskT => "ceskt",
            Lk => "lk",
            LkOpt => "lk-opt",
            LkPostponed => "lk-postponed",
            Ext => "ext",
            Cm => "cm",
            Kcfa => "kcfa",
            ZeroCfa => "0cfa",
            Alk => "alk",
            Acm => "acm",
            Aext => "aext",
            Pushdown => "pushdown",
        }
    }

    pub fn is_abstract(self) -> bool {
        use Machine::*;
        matches!(self, Kcfa | ZeroCfa | Alk | Acm | Aext | Pushdown)
    }

    /// Abstract machines parameterised by a contour depth.
    pub fn takes_k(self) -> bool {
        use Machine::*;
        matches!(self, Kcfa | Alk | Acm | Aext | Pushdown)
    }

    pub fn has_store(self) -> bool {
        !matches!(self, Machine::Cek | Machine::Pushdown)
    }
}

impl fmt::Display for Machine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Default, ValueEnum)]
pub enum Format {
    #[default]
    Text,
    Json,
    Dot,
}

pub const DEFAULT_FUEL: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunConfig {
    pub machine: Machine,
    pub k: Option<usize>,
    pub widen: bool,
    pub gc: bool,
    pub fuel: Option<usize>,
    pub format: Format,
    pub annotate: Option<Vec<String>>,
}

impl RunConfig {
    pub fn new(machine: Machine) -> Self {
        RunConfig { machine, k: None, widen: false, gc: false, fuel: None, format: Format::Text, annotate: None }
    }

    pub fn k(&self) -> usize {
        self.k.unwrap_or(0)
    }

    pub fn fuel(&self) -> usize {
        self.fuel.unwrap_or(DEFAULT_FUEL)
    }

    pub fn validate(&self) -> Result<(), String> {
        let m = self.machine;
        if self.gc && !m.has_store() {
            return Err(format!("--gc needs a machine with a store; {m} has none"));
        }
        if self.widen && !m.is_abstract() {
            return Err(format!("--widen applies only to abstract machines, not {m}"));
        }
        if self.k.is_some() && !m.takes_k() {
            return Err(format!("--k applies only to contour-based analyses, not {m}"));
        }
        if self.fuel.is_some() && m.is_abstract() {
            return Err(format!("--fuel applies only to concrete machines; {m} runs to exhaustion"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_must_fit_the_machine() {
        let mut c = RunConfig::new(Machine::Cek);
        assert!(c.validate().is_ok());
        c.gc = true;
        assert!(c.validate().is_err());
        let mut c = RunConfig::new(Machine::Cesk);
        c.widen = true;
        assert!(c.validate().is_err());
        let mut c = RunConfig::new(Machine::ZeroCfa);
        c.k = Some(1);
        assert!(c.validate().is_err());
        c.k = None;
        c.widen = true;
        assert!(c.validate().is_ok());
        let mut c = RunConfig::new(Machine::Pushdown);
        c.k = Some(1);
        c.widen = true;
        assert!(c.validate().is_ok());
        c.gc = true;
        assert!(c.validate().is_err());
    }

    #[test]
    fn names_match_the_command_line() {
        for m in Machine::value_variants() {
            assert_eq!(m.to_possible_value().unwrap().get_name(), m.name());
        }
        assert_eq!(Machine::ZeroCfa.name(), "0cfa");
        assert_eq!(Machine::LkPostponed.name(), "lk-postponed");
        assert_eq!(Machine::CeskStar.name(), "ceskstar");
        assert_eq!(Machine::from_str("lk-opt", false), Ok(Machine::LkOpt));
    }
}
