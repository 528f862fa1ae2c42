use super::*;
use crate::numerics::Rng;
use proptest::prelude::{prop, prop_assert, prop_assert_eq, proptest};

const IMAZE_3: &str = "task=imaze w=5 h=8 penalty=-0.04 max_steps=50
#####
##I##
#.S.#
##.##
##.##
##.##
#R.B#
#####
";

const SEQ_IND: &str = "task=seq-ind w=6 h=4 penalty=-0.04 max_steps=50
######
#S.RB#
#I...#
######
";

const SEQ: &str = "task=seq w=6 h=4 penalty=-0.04 max_steps=50
######
#.BR.#
#....#
######
";

const PATTERN: &str = "task=pattern w=9 h=7 penalty=-0.04 max_steps=50
#########
#wkw.kwk#
#kkwSwww#
#wwk.kkw#
####.####
###B.R###
#########
";

fn imaze() -> MapSpec {
    MapSpec::parse(IMAZE_3).unwrap()
}

fn pose(x: usize, y: usize, yaw: Yaw) -> AgentPose {
    AgentPose {
        x,
        y,
        yaw,
        pitch: Pitch::Level,
    }
}

#[test]
fn parse_serialize_round_trip() {
    for text in [IMAZE_3, SEQ_IND, SEQ, PATTERN] {
        let map = MapSpec::parse(text).unwrap();
        assert_eq!(map.serialize(), text);
        assert_eq!(MapSpec::parse(&map.serialize()).unwrap(), map);
    }
}

#[test]
fn parse_reports_positions() {
    assert!(matches!(
        MapSpec::parse(""),
        Err(WorldError::Parse { line: 1, .. })
    ));
    let bad = IMAZE_3.replace("#R.B#", "#R.X#");
    match MapSpec::parse(&bad) {
        Err(WorldError::Parse { line, column, msg }) => {
            assert_eq!((line, column), (8, 4));
            assert!(msg.contains("unknown glyph"));
        }
        other => panic!("unexpected {other:?}"),
    }
    let short = IMAZE_3.replace("#.S.#", "#.S.");
    assert!(matches!(
        MapSpec::parse(&short),
        Err(WorldError::Parse { line: 4, .. })
    ));
    let bad_header = IMAZE_3.replace("w=5", "w=five");
    assert!(matches!(
        MapSpec::parse(&bad_header),
        Err(WorldError::Parse { line: 1, .. })
    ));
}

#[test]
fn sealed_goal_is_unreachable() {
    let sealed = IMAZE_3.replace("#R.B#", "#R#B#");
    match MapSpec::parse(&sealed) {
        Err(e) => assert!(e.to_string().contains("unreachable"), "{e}"),
        Ok(_) => panic!("sealed goal accepted"),
    }
}

#[test]
fn open_boundary_is_rejected() {
    let open = IMAZE_3.replace("#.S.#", "..S.#");
    assert!(MapSpec::parse(&open).is_err());
}

#[test]
fn imaze_reset_uses_fixed_spawn_and_is_seeded() {
    let map = imaze();
    for seed in 0..20 {
        let a = EpisodeState::reset(&map, &mut Rng::new(seed)).unwrap();
        let b = EpisodeState::reset(&map, &mut Rng::new(seed)).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.pose.x, a.pose.y), (2, 2));
        assert_eq!(map.cell(2, 1), Cell::Indicator);
        assert!(a.indicator.is_some());
        assert_eq!(a.pose.pitch, Pitch::Level);
    }
}

#[test]
fn random_spawn_never_lands_on_goal() {
    let map = MapSpec::parse(&SEQ.replace("task=seq", "task=single")).unwrap();
    let mut rng = Rng::new(3);
    let mut seen = std::collections::HashSet::new();
    for _ in 0..10_000 {
        let s = EpisodeState::reset(&map, &mut rng).unwrap();
        assert!(!s.cell().is_goal());
        seen.insert((s.pose.x, s.pose.y, s.pose.yaw));
    }
    // 6 spawn cells × 4 yaws
    assert_eq!(seen.len(), 24);
}

#[test]
fn forward_into_wall_is_a_penalised_no_op() {
    let map = imaze();
    let mut s = EpisodeState::with_pose(&map, pose(1, 2, Yaw::West), Some(IndicatorColor::Yellow)).unwrap();
    let r = s.step(Action::Forward).unwrap();
    assert_eq!(s.pose, pose(1, 2, Yaw::West));
    assert_eq!(r.reward, -0.04);
    assert!(!r.done);
    // the indicator blocks movement too
    let mut s = EpisodeState::with_pose(&map, pose(2, 2, Yaw::North), Some(IndicatorColor::Yellow)).unwrap();
    s.step(Action::Forward).unwrap();
    assert_eq!((s.pose.x, s.pose.y), (2, 2));
}

fn walk(s: &mut EpisodeState, actions: &[Action]) -> Vec<StepResult> {
    actions.iter().map(|&a| s.step(a).unwrap()).collect()
}

#[test]
fn imaze_yellow_rewards_red() {
    let map = imaze();
    let mut s = EpisodeState::with_pose(&map, pose(2, 2, Yaw::South), Some(IndicatorColor::Yellow)).unwrap();
    use Action::*;
    let rs = walk(&mut s, &[Forward, Forward, Forward, Forward, LookRight, Forward]);
    let last = rs.last().unwrap();
    assert_eq!(last.reward, 1.0 - 0.04);
    assert!(last.done);
    assert_eq!(s.outcome, Some(Outcome::Success));
    assert!(matches!(s.step(Forward), Err(WorldError::Terminal)));

    let mut s = EpisodeState::with_pose(&map, pose(2, 2, Yaw::South), Some(IndicatorColor::Green)).unwrap();
    let rs = walk(&mut s, &[Forward, Forward, Forward, Forward, LookRight, Forward]);
    assert_eq!(rs.last().unwrap().reward, -1.0 - 0.04);
    assert_eq!(s.outcome, Some(Outcome::Failure));
}

#[test]
fn seq_ind_green_rewards_red_then_blue() {
    let map = MapSpec::parse(SEQ_IND).unwrap();
    let mut s = EpisodeState::with_pose(&map, pose(1, 1, Yaw::East), Some(IndicatorColor::Green)).unwrap();
    let rs = walk(&mut s, &[Action::Forward, Action::Forward, Action::Forward]);
    assert_eq!(rs[1].reward, 0.5 - 0.04);
    assert!(!rs[1].done);
    assert_eq!(rs[2].reward, 1.0 - 0.04);
    assert!(rs[2].done);
    assert_eq!(s.outcome, Some(Outcome::Success));
}

#[test]
fn reverse_order_is_failure() {
    let map = MapSpec::parse(SEQ).unwrap();
    let mut s = EpisodeState::with_pose(&map, pose(1, 1, Yaw::East), None).unwrap();
    let rs = walk(&mut s, &[Action::Forward, Action::Forward]);
    assert_eq!(rs[0].reward, -0.5 - 0.04);
    assert_eq!(rs[1].reward, -1.0 - 0.04);
    assert_eq!(s.outcome, Some(Outcome::Failure));

    // wrong first goal then timeout still counts as failure
    let mut s = EpisodeState::with_pose(&map, pose(1, 1, Yaw::East), None).unwrap();
    s.step(Action::Forward).unwrap();
    while !s.terminal {
        s.step(Action::LookLeft).unwrap();
    }
    assert_eq!(s.outcome, Some(Outcome::Failure));
}

#[test]
fn goals_reward_only_first_entry() {
    let map = MapSpec::parse(SEQ).unwrap();
    let mut s = EpisodeState::with_pose(&map, pose(4, 1, Yaw::West), None).unwrap();
    use Action::*;
    let rs = walk(&mut s, &[Forward, Backward, Forward]);
    assert_eq!(rs[0].reward, 0.5 - 0.04);
    assert_eq!(rs[2].reward, -0.04);
    assert_eq!(rs[2].entered, None);
}

#[test]
fn wandering_episode_scores_exactly_minus_two() {
    let map = imaze();
    let mut s = EpisodeState::with_pose(&map, pose(2, 2, Yaw::North), Some(IndicatorColor::Green)).unwrap();
    let mut sum = 0.0;
    let mut n = 0;
    loop {
        let r = s.step(Action::LookLeft).unwrap();
        sum += r.reward;
        n += 1;
        if r.done {
            break;
        }
    }
    assert_eq!(n, 50);
    assert_eq!(s.total_reward(), -2.0);
    assert!((sum - s.total_reward()).abs() < 1e-12);
    assert_eq!(s.outcome, Some(Outcome::Timeout));
}

#[test]
fn adjacent_wall_fills_every_column() {
    let map = imaze();
    let s = EpisodeState::with_pose(&map, pose(1, 2, Yaw::West), Some(IndicatorColor::Yellow)).unwrap();
    let img = render(&s);
    let f = 1.0 / (1.0 + SHADING * 0.5);
    let gray = (128.0 * f).round() as u8;
    for y in 0..VIEW_SIZE {
        for x in 0..VIEW_SIZE {
            assert_eq!(img.rgb(y, x), [gray; 3], "pixel ({y}, {x})");
        }
    }
}

fn is_indicator_color(rgb: [u8; 3]) -> bool {
    // shading scales all channels, so compare hue by ratios
    let hue = |c: [u8; 3]| {
        let s = f64::from(c[0]) + f64::from(c[1]) + f64::from(c[2]);
        [f64::from(c[0]) / s, f64::from(c[1]) / s, f64::from(c[2]) / s]
    };
    [YELLOW, GREEN].iter().any(|&c| {
        let (a, b) = (hue(rgb), hue(c));
        (0..3).all(|i| (a[i] - b[i]).abs() < 0.02)
    })
}

#[test]
fn indicator_is_visible_from_spawn() {
    let map = imaze();
    for color in [IndicatorColor::Yellow, IndicatorColor::Green] {
        let s = EpisodeState::with_pose(&map, pose(2, 2, Yaw::North), Some(color)).unwrap();
        let img = render(&s);
        let cols = (0..VIEW_SIZE)
            .filter(|&x| is_indicator_color(img.rgb(VIEW_SIZE / 2, x)))
            .count();
        assert!(cols >= 1);
    }
    // any starting yaw reaches an indicator view within two look actions
    for yaw in Yaw::ALL {
        let sequences: [&[Action]; 5] = [
            &[],
            &[Action::LookLeft],
            &[Action::LookRight],
            &[Action::LookLeft, Action::LookLeft],
            &[Action::LookRight, Action::LookRight],
        ];
        let seen = sequences.iter().any(|seq| {
            let mut s = EpisodeState::with_pose(&map, pose(2, 2, yaw), Some(IndicatorColor::Green)).unwrap();
            walk(&mut s, seq);
            let img = render(&s);
            (0..VIEW_SIZE).any(|x| is_indicator_color(img.rgb(VIEW_SIZE / 2, x)))
        });
        assert!(seen, "{yaw:?}");
    }
}

#[test]
fn pattern_rooms_show_their_tiles() {
    let map = MapSpec::parse(PATTERN).unwrap();
    assert_eq!(map.rooms_identical(), Some(false));
    let s = EpisodeState::with_pose(&map, pose(4, 2, Yaw::West), None).unwrap();
    let img = render(&s);
    let mut light = false;
    let mut dark = false;
    for y in VIEW_SIZE / 2..VIEW_SIZE {
        for x in 0..VIEW_SIZE {
            let [r, g, b] = img.rgb(y, x);
            light |= r > 150 && g > 150 && b > 150;
            dark |= r < 20 && g < 20 && b < 20;
        }
    }
    assert!(light && dark);
}

#[test]
fn looking_down_shows_more_floor() {
    let map = imaze();
    let mut s = EpisodeState::with_pose(&map, pose(2, 2, Yaw::South), Some(IndicatorColor::Green)).unwrap();
    let sky = |img: &crate::obs::Observation| {
        (0..VIEW_SIZE)
            .flat_map(|y| (0..VIEW_SIZE).map(move |x| (y, x)))
            .filter(|&(y, x)| img.rgb(y, x) == SKY)
            .count()
    };
    let level = sky(&render(&s));
    s.step(Action::LookDown).unwrap();
    assert_eq!(s.pose.pitch, Pitch::Down);
    assert!(sky(&render(&s)) < level);
    s.step(Action::LookDown).unwrap();
    assert_eq!(s.pose.pitch, Pitch::Down);
}

#[test]
fn rendering_is_deterministic() {
    let map = MapSpec::parse(PATTERN).unwrap();
    let s = EpisodeState::with_pose(&map, pose(4, 3, Yaw::North), None).unwrap();
    assert_eq!(render(&s), render(&s));
    assert_eq!(to_ppm(&render(&s)), to_ppm(&render(&s)));
    assert!(to_ppm(&render(&s)).starts_with(b"P6\n32 32\n255\n"));
}

proptest! {
    #[test]
    fn moves_and_looks_respect_walls(seq in prop::collection::vec(0usize..6, 1..60), seed in 0u64..1000) {
        let map = MapSpec::parse(&SEQ_IND.replace("max_steps=50", "max_steps=100")).unwrap();
        let mut s = EpisodeState::reset(&map, &mut Rng::new(seed)).unwrap();
        let mut sum = 0.0;
        for a in seq {
            if s.terminal {
                break;
            }
            let before = s.pose;
            let action = Action::from_index(a).unwrap();
            let r = s.step(action).unwrap();
            sum += r.reward;
            prop_assert!(map.cell(s.pose.x, s.pose.y).is_passable());
            match action {
                Action::Forward | Action::Backward => {
                    prop_assert_eq!(before.yaw, s.pose.yaw);
                    let moved = before.x.abs_diff(s.pose.x) + before.y.abs_diff(s.pose.y);
                    prop_assert!(moved <= 1);
                }
                _ => prop_assert_eq!((before.x, before.y), (s.pose.x, s.pose.y)),
            }
        }
        prop_assert!((sum - s.total_reward()).abs() < 1e-12);
    }
}
