import numpy as np
import pytest

from sreinforce import symreg
from sreinforce.exprtree import BasisSet, Binary, Constant, Variable, evaluate, parse_expr, ramped_half_and_half
from sreinforce.symreg import GpConfig, GpConfigError


def small_cfg(**kw):
    base = dict(population_size=500, tournament_size=20, generations=20, seed=0)
    base.update(kw)
    return GpConfig(**base)


@pytest.fixture
def square_data():
    rng = np.random.default_rng(0)
    X = rng.uniform(-1, 1, size=(200, 2))
    return X, X[:, 0] + 2 * X[:, 1]


def test_identity_target_recovered():
    X = np.random.default_rng(1).uniform(-1, 1, size=(100, 3))
    report = symreg.fit(X, X[:, 0], small_cfg())
    assert report.raw_fitness < 1e-8


def test_constant_target():
    X = np.random.default_rng(2).normal(size=(50, 2))
    report = symreg.fit(X, np.full(50, 3.0), small_cfg())
    assert np.allclose(evaluate(report.program, X), 3.0, atol=1e-6)


def test_linear_target_majority_of_seeds(square_data):
    X, y = square_data
    hits = sum(symreg.fit(X, y, small_cfg(seed=s)).raw_fitness < 1e-6 for s in range(5))
    assert hits >= 3


def test_fit_is_deterministic(square_data):
    X, y = square_data
    a = symreg.fit(X, y, small_cfg(population_size=200, generations=5, seed=7))
    b = symreg.fit(X, y, small_cfg(population_size=200, generations=5, seed=7))
    assert a.program == b.program
    assert a.best_history == b.best_history and a.mean_history == b.mean_history


def test_history_has_one_entry_per_generation(square_data):
    X, y = square_data
    report = symreg.fit(X, y, small_cfg(population_size=100, generations=4))
    assert len(report.best_history) == 4
    # elitism: the best penalized fitness never gets worse
    assert all(b <= a for a, b in zip(report.best_history, report.best_history[1:]))


def test_penalized_fitness_adds_length():
    p = parse_expr("s0 + 1")
    assert symreg.penalized(0.25, p, 0.01) == pytest.approx(0.28)


def test_fit_rejects_bad_input():
    cfg = small_cfg(population_size=50)
    with pytest.raises(ValueError):
        symreg.fit(np.zeros((1, 2)), np.zeros(1), cfg)
    with pytest.raises(ValueError):
        symreg.fit(np.zeros((5, 2)), np.zeros(4), cfg)
    with pytest.raises(ValueError):
        symreg.fit(np.array([[np.nan], [1.0]]), np.zeros(2), cfg)


@pytest.mark.parametrize(
    "kw",
    [
        dict(p_crossover=0.9, p_subtree_mutation=0.2),
        dict(p_hoist_mutation=-0.1),
        dict(tournament_size=600),
        dict(generations=0),
        dict(init_depth=(3, 2)),
        dict(parsimony_coefficient=-1.0),
    ],
)
def test_config_validation(kw):
    with pytest.raises(GpConfigError):
        small_cfg(**kw).validate()


# --- tournament ------------------------------------------------------------


def _population(n=10, seed=0):
    rng = np.random.default_rng(seed)
    return ramped_half_and_half(rng, BasisSet(), 2, (2, 4), n)


def test_tournament_full_size_is_argmin():
    pop = _population()
    fitness = np.random.default_rng(1).uniform(size=10)
    assert symreg.tournament(pop, fitness, 10, np.random.default_rng(5)) == int(np.argmin(fitness))


def test_tournament_size_one_is_uniform():
    pop = _population()
    fitness = np.arange(10.0)
    rng = np.random.default_rng(0)
    counts = np.bincount([symreg.tournament(pop, fitness, 1, rng) for _ in range(20_000)], minlength=10)
    assert counts.min() > 1700 and counts.max() < 2300


def test_tournament_replays_prng_stream():
    pop = _population()
    fitness = np.random.default_rng(3).uniform(size=10)
    winner = symreg.tournament(pop, fitness, 4, np.random.default_rng(42))
    contenders = np.random.default_rng(42).choice(10, size=4, replace=False)
    assert winner == contenders[np.argmin(fitness[contenders])]


def test_tournament_ties_go_to_shorter_program():
    pop = [parse_expr("s0 + s1"), Variable(0)]
    assert symreg.tournament(pop, np.zeros(2), 2, np.random.default_rng(0)) == 1


# --- generation and operators ----------------------------------------------


def test_zero_operator_probabilities_copy_winners():
    pop = _population(50)
    fitness = np.random.default_rng(0).uniform(size=50)
    cfg = small_cfg(population_size=50, tournament_size=5, p_crossover=0, p_subtree_mutation=0,
                    p_hoist_mutation=0, p_point_mutation=0)
    new = symreg.evolve_generation(pop, fitness, cfg, np.random.default_rng(0), 2)
    assert new[0] is pop[int(np.argmin(fitness))]
    assert all(any(child is p for p in pop) for child in new)


def test_self_crossover_of_identical_leaves():
    pop = [Variable(1)] * 30
    cfg = small_cfg(population_size=30, tournament_size=3, p_crossover=1.0, p_subtree_mutation=0,
                    p_hoist_mutation=0, p_point_mutation=0)
    new = symreg.evolve_generation(pop, np.zeros(30), cfg, np.random.default_rng(0), 2)
    assert all(child == Variable(1) for child in new)


def test_self_crossover_stays_well_formed():
    tree = parse_expr("s0 * s1 + cos(s0)")
    cfg = small_cfg(population_size=30, tournament_size=3, p_crossover=1.0, p_subtree_mutation=0,
                    p_hoist_mutation=0, p_point_mutation=0)
    new = symreg.evolve_generation([tree] * 30, np.zeros(30), cfg, np.random.default_rng(0), 2)
    assert new[0] is tree
    assert all(symreg.closure_ok(child, 2, cfg) for child in new)


def test_operators_respect_closure():
    cfg = small_cfg(max_depth=8, max_length=30)
    rng = np.random.default_rng(0)
    pop = ramped_half_and_half(rng, cfg.basis, 3, (2, 6), 100)
    for i in range(300):
        a, b = pop[i % 100], pop[(7 * i) % 100]
        for child in (
            symreg.crossover(a, b, rng, cfg),
            symreg.subtree_mutation(a, rng, cfg, 3),
            symreg.hoist_mutation(a, rng),
            symreg.point_mutation(a, rng, cfg, 3),
        ):
            assert child.max_var < 3
            assert child.depth <= max(cfg.max_depth, a.depth)


def test_hoist_never_grows():
    rng = np.random.default_rng(0)
    tree = parse_expr("(s0 + s1) * cos(s0 - 0.5)")
    for _ in range(50):
        assert symreg.hoist_mutation(tree, rng).length <= tree.length


def test_point_mutation_keeps_shape():
    rng = np.random.default_rng(0)
    tree = parse_expr("(s0 + s1) * cos(s0 - 0.5)")
    for _ in range(50):
        mutated = symreg.point_mutation(tree, rng, small_cfg(), 2)
        assert mutated.length == tree.length and mutated.depth == tree.depth


def test_warm_start_population_is_reused(square_data):
    X, y = square_data
    first = symreg.fit(X, y, small_cfg(population_size=100, generations=3))
    second = symreg.fit(X, y, small_cfg(population_size=100, generations=1), initial_population=first.population)
    assert second.fitness <= first.fitness


def test_scores_cache_by_identity():
    cols = np.zeros((1, 4))
    a = Binary("add", Variable(0), Constant(1.0))
    raw, pen = symreg._score([a, a], cols, np.ones(4), 0.1, {})
    assert raw.tolist() == [0.0, 0.0]
    assert pen.tolist() == pytest.approx([0.3, 0.3])
