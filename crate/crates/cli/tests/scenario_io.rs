use taskalloc::tasks::{GammaKind, GammaSpec};
use taskalloc_cli::scenario::{parse_scenario, serialize_scenario, ScenarioError};

const MINIMAL: &str = r#"
dimension = 2
duration = 1.0
pi_star = [1.0]

[[robots]]
start = [0.0, 0.0]
specialization = [1.0]

[[tasks]]
type = "goto"
target = [1.0, 1.0]
"#;

#[test]
fn minimal_document_fills_defaults() {
    let scenario = parse_scenario(MINIMAL).unwrap();
    assert_eq!(scenario.dim, 2);
    assert_eq!(scenario.num_robots(), 1);
    assert_eq!(scenario.num_tasks(), 1);
    assert_eq!(scenario.dt, 0.02);
    assert_eq!(scenario.params.c, 100.0);
    assert_eq!(scenario.params.kappa, 10.0);
    assert_eq!(scenario.params.delta_max, 50.0);
    assert_eq!(scenario.params.eps_reg, 1e-6);
    assert_eq!(scenario.gamma, GammaSpec::linear(1.0));
}

#[test]
fn kappa_at_most_one_is_rejected() {
    let text = format!("{MINIMAL}\n[params]\nkappa = 0.5\n");
    let err = parse_scenario(&text).unwrap_err();
    match &err {
        ScenarioError::Semantic { path, message } => {
            assert_eq!(path, "params.kappa");
            assert_eq!(message, "kappa must exceed 1");
        }
        other => panic!("expected semantic error, got {other:?}"),
    }
}

#[test]
fn specialization_length_must_match_task_count() {
    let text = MINIMAL.replace("specialization = [1.0]", "specialization = [1.0, 0.5]");
    let err = parse_scenario(&text).unwrap_err();
    match &err {
        ScenarioError::Semantic { path, .. } => {
            assert_eq!(path, "robots[0].specialization")
        }
        other => panic!("expected semantic error, got {other:?}"),
    }
}

#[test]
fn negative_specialization_is_rejected_with_path() {
    let text = MINIMAL.replace("specialization = [1.0]", "specialization = [-1.0]");
    let err = parse_scenario(&text).unwrap_err();
    assert_eq!(
        err.to_string(),
        "robots[0].specialization: negative entry at index 0"
    );
}

#[test]
fn syntax_errors_carry_location() {
    let err = parse_scenario("dimension = [oops").unwrap_err();
    match err {
        ScenarioError::Syntax(e) => {
            let msg = e.to_string();
            assert!(msg.contains("line 1"), "no location in: {msg}");
        }
        other => panic!("expected syntax error, got {other:?}"),
    }
}

#[test]
fn unknown_task_type_is_rejected() {
    let text = MINIMAL.replace("type = \"goto\"", "type = \"patrol\"");
    let err = parse_scenario(&text).unwrap_err();
    assert!(err.to_string().starts_with("tasks[0].type"));
}

#[test]
fn pi_star_outside_unit_interval_is_rejected() {
    let text = MINIMAL.replace("pi_star = [1.0]", "pi_star = [1.5]");
    let err = parse_scenario(&text).unwrap_err();
    assert_eq!(err.to_string(), "pi_star[0]: must lie in [0, 1]");
}

#[test]
fn roundtrip_reproduces_scenario_exactly() {
    let text = std::fs::read_to_string(
        concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/example3.toml"),
    )
    .unwrap();
    let scenario = parse_scenario(&text).unwrap();
    let reparsed = parse_scenario(&serialize_scenario(&scenario)).unwrap();
    assert_eq!(scenario, reparsed);
}

#[test]
fn roundtrip_preserves_awkward_floats() {
    let mut scenario = parse_scenario(MINIMAL).unwrap();
    scenario.dt = 0.1 + 0.2 / 3.0;
    scenario.duration = std::f64::consts::PI;
    scenario.params.eps_reg = 3.141592653589793e-11;
    scenario.gamma = GammaSpec {
        kind: GammaKind::Cubic,
        gain: 2.0f64.sqrt(),
    };
    let reparsed = parse_scenario(&serialize_scenario(&scenario)).unwrap();
    assert_eq!(scenario, reparsed);
}
