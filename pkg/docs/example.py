import ebsmooth as ebs

SIGMA = 0.5
SEED = 0


def certify_linear_mixture():
    """certify a linear classifier on a two-class mixture, with and without xhat"""

    spec = ebs.DatasetSpec(mu=(1.5, 0.0), sigma0=1.0, n_test=50)
    test = ebs.gen_dataset(spec, SEED, split="test")

    # class 1 lies at -mu
    h = ebs.LinearClassifier([-1.0, 0.0])
    model = spec.model()
    confidence = ebs.ConfidenceSpec(alpha=0.001, n0=100, nc=10_000)

    curves = {}
    for name, base in (("vanilla", h), ("eb", ebs.EbClassifier(h, model, SIGMA))):
        results = ebs.certify_many(base, test.points, SIGMA, confidence, SEED, workers=2)
        curves[name] = ebs.certified_accuracy(results, test.labels, [0.0, 0.5, 1.0])
        print(name, curves[name].values)

    return curves


def train_and_certify():
    """fit an energy and a soft classifier, then certify the smoothed classifier"""

    spec = ebs.DatasetSpec(mu=(1.5, 0.0), n_train=1000, n_test=20)
    train = ebs.gen_dataset(spec, SEED, split="train")
    test = ebs.gen_dataset(spec, SEED, split="test")

    deen = ebs.DeenConfig(SIGMA, hidden=(64, 64), steps=2000)
    energy = ebs.train_deen(train.points, deen, ebs.rng_stream(SEED, 1, 0))

    cfg = ebs.TrainConfig(SIGMA, mode="xhat", hidden=(32,), steps=500, m=4)
    attack = ebs.AttackSpec(epsilon=0.5, steps=8)
    H = ebs.train_xhat(train, energy, cfg, attack, ebs.rng_stream(SEED, 2, 0))

    c = ebs.EbClassifier(H, energy, SIGMA)
    confidence = ebs.ConfidenceSpec(nc=10_000)
    results = ebs.certify_many(c, test.points, SIGMA, confidence, SEED)

    print("average certified radius", ebs.average_certified_radius(results, test.labels))
    return results


def walk_jump_samples():
    """walk-jump from noisy points using the closed-form estimator of the mixture"""

    model = ebs.IsoMixture.symmetric([1.5, 0.0], 1.0)
    gen = ebs.rng_stream(SEED, 3, 0)

    x = model.sample(500, gen)
    y = x + SIGMA * gen.standard_normal(x.shape)

    cfg = ebs.WalkJumpConfig(sigma_prime=0.05, delta=0.001, tau=100)
    samples = ebs.walk_jump(model, model, y, cfg, gen, sigma=SIGMA)

    print("variance, single step", ebs.bayes_estimate(model, y, SIGMA).var(axis=0))
    print("variance, walk-jump  ", samples.var(axis=0))
    return samples


if __name__ == "__main__":
    certify_linear_mixture()
    train_and_certify()
    walk_jump_samples()
