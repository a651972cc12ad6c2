"""Forecast densities and benchmark against AVE/LAST in a rolling backtest.

One-step and multi-step forecasts with asymptotic intervals for moment
functionals, then a rolling out-of-sample comparison where the truncation
level is re-selected by cross-validation before every forecast.
"""

from densfar import (
    error_metrics,
    feature_interval,
    fit,
    inner,
    make_cosine_generator,
    make_forecast,
    make_grid,
    moment_functional,
    rolling_backtest,
    select_K_cv,
    simulate_far,
)

grid = make_grid(0.0, 1.0, 128)
generator = make_cosine_generator(
    grid,
    strengths=(0.85, 0.7, 0.55),
    noise_sds=(0.06, 0.05, 0.04),
)
panel = simulate_far(generator, T=120, seed=3, burn_in=150)

# hold the final period out as the realization to score against
train = panel.head(120)
truth = panel.densities[120]

K = select_K_cv(train, candidates=range(1, 7), n_validation=5)
model = fit(train, K)
print(f"cross-validated truncation level: K={K}")

# forecasts for horizons 1..3; each result carries the demeaned forecast
# and its normalized density
results = make_forecast(model, model.w_last, horizon=3)
for r in results:
    print(f"h={r.horizon}: forecast density mass "
          f"{inner(grid.constant(1.0), r.f_forecast):.6f}")

one_step = results[0]
scores = error_metrics(one_step.f_forecast, truth)
print("one-step errors vs realized density:",
      {k: round(v, 5) for k, v in scores.as_dict().items()})

# 95% interval for the first-moment functional of the next demeaned density
i1 = moment_functional(1, grid)
lo, hi = feature_interval(model, i1, one_step.w_forecast, alpha=0.05)
realized = inner(i1, truth - model.mean_density)
print(f"95% interval for the next first moment: [{lo:+.5f}, {hi:+.5f}], "
      f"realized {realized:+.5f} ({'inside' if lo <= realized <= hi else 'outside'})")

# rolling comparison over the last 10 periods
report = rolling_backtest(panel, n_test=10, K_candidates=range(1, 5), n_validation=5)
print(f"\nbacktest over {report.n_test} periods (K chosen per period: "
      f"{report.selected_K})")
print(f"{'predictor':<10}{'mean D2':>10}{'median D2':>12}{'mean D1':>10}")
for predictor in ("FAR", "AVE", "LAST"):
    d2_mean, d2_med = report.aggregates[(predictor, "d2")]
    d1_mean, _ = report.aggregates[(predictor, "d1")]
    print(f"{predictor:<10}{d2_mean:>10.4f}{d2_med:>12.4f}{d1_mean:>10.4f}")
