"""Twelve hand-built transitions covering every reward branch, with exact expected values."""

from conftest import make_world

FAR = (20.0, 20.0)


def _case(name, before, after, robot, expected):
    return {"name": name, "before": before, "after": after, "robot": robot, "expected": expected}


def build_cases():
    cases = []

    # robot 0 already home; robot 1 arrives, completing the team
    b = make_world([((0.0, 0.0), (0.0, 0.0)), ((1.0, 3.0), (1.0, 3.2))], reached=[True, False])
    a = make_world([((0.0, 0.0), (0.0, 0.0)), ((1.0, 3.1), (1.0, 3.2))], reached=[True, False])
    cases.append(_case("all_success", b, a, 1, 5.0))
    cases.append(_case("already_reached", b, a, 0, 0.0))

    b = make_world([((2.0, 0.0), (2.5, 0.0)), ((0.0, 3.0), FAR)])
    a = make_world([((2.4, 0.0), (2.5, 0.0)), ((0.0, 3.0), FAR)])
    cases.append(_case("own_goal", b, a, 0, 10.0))

    b = make_world([((2.0, 0.0), (2.5, 0.0)), ((0.0, 3.0), FAR)], humans=[(2.6, 0.3)])
    a = make_world([((2.4, 0.0), (2.5, 0.0)), ((0.0, 3.0), FAR)], humans=[(2.6, 0.3)])
    cases.append(_case("goal_before_collision", b, a, 0, 10.0))

    b = make_world([((0.0, 0.0), FAR)], humans=[(1.0, 0.0)])
    a = make_world([((0.5, 0.0), FAR)], humans=[(1.0, 0.0)])
    cases.append(_case("collision_human", b, a, 0, -20.0))

    b = make_world([((0.0, 0.0), FAR), ((1.0, 0.0), (-20.0, 0.0))])
    a = make_world([((0.3, 0.0), FAR), ((0.7, 0.0), (-20.0, 0.0))])
    cases.append(_case("collision_robot", b, a, 1, -20.0))

    # endpoints clear, overlap only in the middle of the move
    b = make_world([((-1.0, 0.0), FAR)], humans=[(0.0, 0.0)])
    a = make_world([((1.0, 0.0), FAR)], humans=[(0.0, 0.0)])
    cases.append(_case("collision_mid_step", b, a, 0, -20.0))

    b = make_world([((0.0, 0.0), FAR)], humans=[(1.05, 0.0)])
    cases.append(_case("discomfort_0.45_boundary", b, b.copy(), 0, max(-1.0 / 0.45, -5.0)))

    b = make_world([((0.0, 0.0), FAR)], humans=[(1.0, 0.0)], robot_radius=0.25, human_radius=0.5)
    cases.append(_case("discomfort_0.25", b, b.copy(), 0, -4.0))

    b = make_world([((0.0, 0.0), FAR)], humans=[(0.7, 0.0)])
    cases.append(_case("discomfort_0.10_floor", b, b.copy(), 0, -5.0))

    b = make_world([((0.0, 0.0), FAR)], humans=[(0.75, 0.0)], robot_radius=0.25, human_radius=0.5)
    cases.append(_case("discomfort_touching", b, b.copy(), 0, -5.0))

    b = make_world([((0.0, 0.0), (0.5, 0.0))])
    a = make_world([((0.2, 0.0), (0.5, 0.0))])
    cases.append(_case("progress_0.4", b, a, 0, 0.4))
    return cases
