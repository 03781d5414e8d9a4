use std::path::Path;

use super::GridCase;
use crate::error::{Error, Result};

/// Parses JSON case-file text into a validated per-unit [`GridCase`].
pub fn parse_case(text: &str) -> Result<GridCase> {
    let raw: GridCase = serde_json::from_str(text).map_err(Error::from_json)?;
    let case = raw.to_per_unit();
    case.validate()?;
    Ok(case)
}

/// Canonical text form: pretty-printed JSON in per-unit, trailing newline.
pub fn serialize_case(case: &GridCase) -> String {
    let pu = case.to_per_unit();
    let mut text = serde_json::to_string_pretty(&pu).expect("GridCase serializes");
    text.push('\n');
    text
}

pub fn read_case(path: impl AsRef<Path>) -> Result<GridCase> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_case(&text)
}

pub fn write_case(path: impl AsRef<Path>, case: &GridCase) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, serialize_case(case)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid_model::test_support::*;
    use crate::grid_model::{BusKind, Plant, Units};

    const TWO_BUS: &str = r#"{
      "base_mva": 100.0,
      "buses": [
        {"id": 1, "kind": "Slack", "v_mag": 1.0, "v_ang": 0.0, "p_load": 0.0, "q_load": 0.0},
        {"id": 2, "kind": "PQ", "v_mag": 1.0, "v_ang": 0.0, "p_load": 0.5, "q_load": 0.1}
      ],
      "branches": [
        {"id": 1, "from_bus": 1, "to_bus": 2, "r": 0.01, "x": 0.1, "s_max": 2.0}
      ],
      "generators": [
        {"id": 1, "bus": 1, "p_gen": 0.5, "p_min": 0.0, "p_max": 2.0,
         "q_min": -1.0, "q_max": 1.0, "v_set": 1.0, "plant": 1}
      ],
      "plants": [{"id": 1, "name": "A", "generators": [1]}],
      "monitored_buses": [1, 2],
      "monitored_branches": [1]
    }"#;

    #[test]
    fn parses_minimal_two_bus() {
        let case = parse_case(TWO_BUS).unwrap();
        assert_eq!(case.buses.len(), 2);
        assert_eq!(case.branches.len(), 1);
        // omitted fields fall back to defaults
        assert_eq!(case.buses[1].v_min, 0.97);
        assert_eq!(case.buses[1].v_max, 1.07);
        assert!(case.branches[0].in_service);
    }

    #[test]
    fn syntax_error_reports_position() {
        let err = parse_case("{\n  \"base_mva\": 100.0,\n  \"buses\": [ oops ]\n}").unwrap_err();
        match err {
            Error::Syntax { line, column, .. } => {
                assert_eq!(line, 3);
                assert!(column > 0);
            }
            other => panic!("expected syntax error, got {other}"),
        }
    }

    #[test]
    fn duplicate_slack_is_semantic_error() {
        let text = TWO_BUS.replace("\"kind\": \"PQ\"", "\"kind\": \"Slack\"");
        let err = parse_case(&text).unwrap_err();
        assert!(matches!(err, Error::Semantic(_)));
        assert!(err.to_string().contains("multiple slack"));
    }

    #[test]
    fn mw_units_convert_on_parse() {
        let text = TWO_BUS
            .replace("\"base_mva\": 100.0,", "\"base_mva\": 100.0, \"units\": \"mw\",")
            .replace("\"p_load\": 0.5", "\"p_load\": 50.0");
        let text = text
            .replace("\"p_gen\": 0.5, \"p_min\": 0.0, \"p_max\": 2.0", "\"p_gen\": 50.0, \"p_min\": 0.0, \"p_max\": 200.0")
            .replace("\"q_min\": -1.0, \"q_max\": 1.0", "\"q_min\": -100.0, \"q_max\": 100.0")
            .replace("\"s_max\": 2.0", "\"s_max\": 200.0")
            .replace("\"q_load\": 0.1}", "\"q_load\": 10.0}");
        let case = parse_case(&text).unwrap();
        let reference = parse_case(TWO_BUS).unwrap();
        assert_eq!(case.units, Units::Pu);
        assert_eq!(case, reference);
    }

    #[test]
    fn single_bus_without_branches_serializes() {
        let case = GridCase {
            base_mva: 100.0,
            units: Units::Pu,
            buses: vec![bus(1, BusKind::Slack, 0.0, 0.0)],
            branches: vec![],
            generators: vec![generator(1, 1, 1, 1.0)],
            plants: vec![Plant {
                id: 1,
                name: "only".into(),
                generators: vec![1],
            }],
            monitored_buses: vec![1],
            monitored_branches: vec![],
        };
        let text = serialize_case(&case);
        assert_eq!(parse_case(&text).unwrap(), case);
    }
}
