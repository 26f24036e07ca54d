use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown {what} `{value}`{}", valid_suffix(.valid))]
pub struct ParseEnumError {
    pub what: &'static str,
    pub value: String,
    pub valid: Vec<String>,
}

fn valid_suffix(valid: &[String]) -> String {
    if valid.is_empty() {
        String::new()
    } else {
        format!(" (valid: {})", valid.join(", "))
    }
}

impl ParseEnumError {
    pub fn new(what: &'static str, value: &str) -> Self {
        ParseEnumError {
            what,
            value: value.to_owned(),
            valid: Vec::new(),
        }
    }

    pub fn with_valid(what: &'static str, value: &str, valid: &[&str]) -> Self {
        ParseEnumError {
            what,
            value: value.to_owned(),
            valid: valid.iter().map(|s| (*s).to_owned()).collect(),
        }
    }
}
