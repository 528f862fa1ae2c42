use std::collections::HashSet;

use super::*;
use crate::worldsim::{Action, AgentPose, EpisodeState, IndicatorColor, Outcome, Pitch, Yaw};

/// Actions of a shortest path from the pose to `goal`, turning as needed.
fn path_actions(map: &MapSpec, pose: AgentPose, goal: (usize, usize)) -> Vec<Action> {
    let dist = map.distances_from(goal);
    let d = |x: usize, y: usize| dist[y * map.width + x];
    let mut actions = Vec::new();
    let (mut x, mut y, mut yaw) = (pose.x, pose.y, pose.yaw);
    while (x, y) != goal {
        let here = d(x, y).expect("reachable");
        let next = Yaw::ALL
            .into_iter()
            .find(|yw| {
                let (dx, dy) = yw.delta();
                let (nx, ny) = ((x as i64 + dx) as usize, (y as i64 + dy) as usize);
                map.cell(nx, ny).is_passable()
                    && (!map.cell(nx, ny).is_goal() || (nx, ny) == goal)
                    && d(nx, ny) == Some(here - 1)
            })
            .expect("descending neighbour");
        while yaw != next {
            actions.push(Action::LookRight);
            yaw = yaw.right();
        }
        actions.push(Action::Forward);
        let (dx, dy) = next.delta();
        x = (x as i64 + dx) as usize;
        y = (y as i64 + dy) as usize;
    }
    actions
}

#[test]
fn imaze_shape_and_determinism() {
    for l in IMAZE_TRAIN_LENGTHS.into_iter().chain(IMAZE_EVAL_LENGTHS) {
        let m = gen_imaze(l).unwrap();
        assert_eq!(m, gen_imaze(l).unwrap());
        assert_eq!((m.width, m.height), (5, l + 5));
        assert_eq!(m.find(Cell::Spawn), Some((2, 2)));
        assert_eq!(m.find(Cell::Indicator), Some((2, 1)));
        assert_eq!(m.find(Cell::Red), Some((1, l + 3)));
        assert_eq!(m.find(Cell::Blue), Some((3, l + 3)));
        assert_eq!(m.distance((2, 2), (1, l + 3)), Some(l + 2));
    }
    assert!(gen_imaze(0).is_err());
}

#[test]
fn optimal_imaze_paths_finish_in_time() {
    for l in IMAZE_TRAIN_LENGTHS.into_iter().chain(IMAZE_EVAL_LENGTHS) {
        let m = gen_imaze(l).unwrap();
        for color in [IndicatorColor::Yellow, IndicatorColor::Green] {
            for yaw in Yaw::ALL {
                let pose = AgentPose { x: 2, y: 2, yaw, pitch: Pitch::Level };
                let mut s = EpisodeState::with_pose(&m, pose, Some(color)).unwrap();
                s.set_horizon(100);
                let goal = if color == IndicatorColor::Yellow { Cell::Red } else { Cell::Blue };
                for a in path_actions(&m, pose, m.find(goal).unwrap()) {
                    s.step(a).unwrap();
                }
                assert_eq!(s.outcome, Some(Outcome::Success), "l={l}");
            }
        }
    }
}

#[test]
fn pattern_universe_has_512_members() {
    let all: HashSet<_> = (0..PATTERN_COUNT).map(|p| pattern_map(PatternPair::new(p, p)).unwrap().grid_string()).collect();
    assert_eq!(all.len(), 512);
    assert!(pattern_map(PatternPair::new(512, 0)).is_err());
}

#[test]
fn pattern_sets_follow_the_split_protocol() {
    let (train, unseen) = gen_pattern_matching_sets(&mut Rng::new(7)).unwrap();
    for split in [&train, &unseen] {
        assert_eq!(split.bases.len(), 250);
        assert_eq!(split.maps.len(), 500);
        let identical = split.pairs.iter().filter(|p| p.identical).count();
        assert_eq!(identical, 250);
        for (pair, map) in split.pairs.iter().zip(&split.maps) {
            assert_eq!(pair.identical, pair.left == pair.right);
            assert_eq!(map.rooms_identical(), Some(pair.identical));
        }
        let bases: HashSet<_> = split.bases.iter().collect();
        assert_eq!(bases.len(), 250);
    }
    let tb: HashSet<_> = train.bases.iter().collect();
    assert!(unseen.bases.iter().all(|b| !tb.contains(b)));
    let tm: HashSet<_> = train.maps.iter().map(MapSpec::serialize).collect();
    assert!(unseen.maps.iter().all(|m| !tm.contains(&m.serialize())));
    let (again, _) = gen_pattern_matching_sets(&mut Rng::new(7)).unwrap();
    assert_eq!(again, train);
}

#[test]
fn random_mazes_are_reachable() {
    let mut rng = Rng::new(11);
    for task in [Task::Single, Task::Seq, Task::SingleInd, Task::SeqInd] {
        let ([lo, _], [_, hi]) = size_ranges(task).unwrap();
        for size in lo..=hi {
            for _ in 0..10 {
                let m = gen_random_maze(task, size, size > 8, &mut rng).unwrap();
                assert_eq!(m.positions(Cell::Red).len(), 1);
                assert_eq!(m.positions(Cell::Blue).len(), 1);
                let goals = [m.find(Cell::Red).unwrap(), m.find(Cell::Blue).unwrap()];
                for s in m.spawn_cells() {
                    for g in goals {
                        assert!(m.distance(s, g).is_some());
                    }
                }
                if task.has_indicator() {
                    assert_eq!(m.find(Cell::Spawn), Some((1, 1)));
                    assert_eq!(m.find(Cell::Indicator), Some((2, 1)));
                }
                assert_eq!(MapSpec::parse(&m.serialize()).unwrap(), m);
            }
        }
    }
}

#[test]
fn impossible_parameters_exhaust_attempts() {
    let err = gen_random_maze_with(Task::Single, 5, false, 1.0, &mut Rng::new(1)).unwrap_err();
    assert!(matches!(err, GenError::Exhausted { attempts: 1000, .. }));
    assert!(gen_random_maze(Task::IMaze, 5, false, &mut Rng::new(1)).is_err());
}

#[test]
fn large_mazes_use_longer_limits() {
    let m = gen_random_maze(Task::Single, 10, true, &mut Rng::new(2)).unwrap();
    assert_eq!((m.penalty, m.max_steps), (-0.02, 100));
    let m = gen_random_maze(Task::Single, 5, false, &mut Rng::new(2)).unwrap();
    assert_eq!((m.penalty, m.max_steps), (-0.04, 50));
}

#[test]
fn families_are_disjoint_and_deterministic() {
    for task in [Task::Single, Task::SeqInd] {
        let f = gen_maze_family(task, 60, 5).unwrap();
        assert_eq!(f, gen_maze_family(task, 60, 5).unwrap());
        let train: HashSet<_> = f.train.iter().map(MapSpec::serialize).collect();
        assert!(f.unseen.iter().all(|m| !train.contains(&m.serialize())));
        let ([lo, hi], [llo, lhi]) = size_ranges(task).unwrap();
        assert!(f.train.iter().all(|m| (lo..=hi).contains(&(m.width - 2))));
        assert!(f.unseen_large.iter().all(|m| (llo..=lhi).contains(&(m.width - 2))));
    }
}

#[test]
fn written_sets_reload_identically() {
    let dir = tempfile::tempdir().unwrap();
    let set = gen_task_maps(Task::IMaze, 0).unwrap();
    let manifest = write_map_set(&set, dir.path()).unwrap();
    assert_eq!(manifest.counts, vec![("train".into(), 3), ("unseen".into(), 10)]);
    let train = load_split(&dir.path().join("imaze/train")).unwrap();
    assert_eq!(train, set.splits[0].1);
    assert!(load_split(&dir.path().join("imaze/missing")).is_err());
}
