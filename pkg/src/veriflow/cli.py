"""Command-line entry points: problem generation, exploration, training,
single solves, benchmark sweeps/ablations, and report formatting."""

from __future__ import annotations

import argparse
import json
import sys

from . import bench, config, domain, engine, scorer


def _traj_path(dataset_path: str) -> str:
    if dataset_path.endswith(".jsonl"):
        return dataset_path[:-len(".jsonl")] + ".traj.jsonl"
    return dataset_path + ".traj"


def _parse_vars(text: str) -> int | tuple[int, int]:
    if "-" in text:
        lo, hi = text.split("-", 1)
        return (int(lo), int(hi))
    return int(text)


def cmd_gen_problems(args) -> int:
    cfg = config.load_config(args.config)
    problems = [domain.gen_problem(args.seed + i, _parse_vars(args.vars))
                for i in range(args.count)]
    if args.count >= 5 and not args.no_bins:
        problems = domain.bin_difficulty(problems, config.generator(cfg),
                                         seed=cfg["gen.seed"])
    domain.write_corpus(problems, args.out)
    print(f"wrote {len(problems)} problems to {args.out}")
    return 0


def cmd_explore(args) -> int:
    cfg = config.load_config(args.config)
    problems = domain.read_corpus(args.corpus)
    records, trajectories, logs = bench.run_explore(
        problems, config.engine_config(cfg), config.generator(cfg),
        config.verifier(cfg))
    scorer.write_dataset(records, args.out)
    scorer.write_trajectories(trajectories, _traj_path(args.out))
    if args.log:
        bench.write_log(logs, args.log)
    print(f"wrote {len(records)} labeled candidates to {args.out}; "
          f"{len(trajectories)} solved trajectories to {_traj_path(args.out)}")
    return 0


def cmd_train(args) -> int:
    cfg = config.load_config(args.config)
    dataset = scorer.read_dataset(args.data)
    traj_file = args.traj or _traj_path(args.data)
    try:
        trajectories = scorer.read_trajectories(traj_file)
    except FileNotFoundError:
        trajectories = []
    params, report = scorer.train(dataset, trajectories, config.train_config(cfg))
    scorer.save_params(params, args.out_params)
    print(f"trained on {report.n_train_states} states "
          f"({report.n_pairs} pairs): train acc {report.train_accuracy:.3f}, "
          f"holdout acc {report.holdout_accuracy:.3f}; params -> {args.out_params}")
    return 0


def cmd_solve(args) -> int:
    cfg = config.load_config(args.config)
    with open(args.problem, encoding="utf-8") as fh:
        lines = [ln for ln in fh if ln.strip()]
    problem = domain.problem_from_json(lines[args.index])
    params = scorer.load_params(args.params) if args.params \
        else scorer.zero_residual_params(config.train_config(cfg))
    policy = args.policy or cfg["engine.policy"]
    budget = args.budget if args.budget is not None else cfg["engine.budget"]
    gen = config.generator(cfg)
    ver = config.verifier(cfg)
    if policy in engine.INTERMEDIATE_POLICIES:
        engine_cfg = config.engine_config(cfg, policy=policy, budget_B=budget)
        traj, ledger = engine.solve_gated(problem, params, engine_cfg,
                                          config.alloc_config(cfg), gen, ver)
        summary = bench.run_summary(problem, traj, ledger, cfg["gen.seed"])
    else:
        if policy == "best_of_n":
            answer, ledger = engine.solve_best_of_n(problem, budget, ver, gen)
        elif policy == "majority":
            answer, ledger = engine.solve_majority(problem, budget, gen)
        elif policy == "beam":
            answer, ledger = engine.solve_beam(problem, cfg["engine.beam_width"],
                                               budget, ver, gen, params)
        else:
            raise SystemExit(f"unknown policy {policy!r}")
        summary = {
            "problem_id": problem.problem_id,
            "outcome": "answered" if answer is not None else "no-answer",
            "answer": None if answer is None else str(answer),
            "verifier_calls": ledger.verifier_calls,
            "generation_calls": ledger.generation_calls,
            "steps": None,
            "seed": cfg["gen.seed"],
        }
    print(json.dumps(summary, sort_keys=True))
    return 0


def _parse_int_list(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(",") if x.strip())


def cmd_bench_sweep(args) -> int:
    with open(args.spec, encoding="utf-8") as fh:
        spec_cfg = {}
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if line:
                key, value = (p.strip() for p in line.split("=", 1))
                spec_cfg[key] = value
    cfg = config.load_config(spec_cfg.get("config"))
    problems = domain.read_corpus(spec_cfg["corpus"])
    spec = bench.SweepSpec(
        budgets=_parse_int_list(spec_cfg.get("budgets", "2,4,8,16,32,64,128")),
        policies=tuple(spec_cfg.get("policies", "full,best_of_n,majority,beam").split(",")),
        seeds=_parse_int_list(spec_cfg.get("seeds", "0")),
        beam_width=int(spec_cfg.get("beam_width", cfg["engine.beam_width"])),
    )
    params = scorer.load_params(spec_cfg["params"]) if "params" in spec_cfg \
        else scorer.zero_residual_params(config.train_config(cfg))
    rows = bench.run_sweep(spec, problems, params, config.generator(cfg),
                           config.verifier(cfg), config.alloc_config(cfg),
                           config.engine_config(cfg))
    csv_text = bench.rows_to_csv(rows)
    out = spec_cfg.get("out")
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(csv_text)
        print(f"wrote {len(rows)} rows to {out}")
    else:
        sys.stdout.write(csv_text)
    return 0


def cmd_bench_ablation(args) -> int:
    cfg = config.load_config(args.config)
    problems = domain.read_corpus(args.corpus)
    params = scorer.load_params(args.params)
    rows = bench.run_ablation(problems, params, config.generator(cfg),
                              config.verifier(cfg),
                              seeds=_parse_int_list(args.seeds),
                              budget=args.budget,
                              alloc_cfg=config.alloc_config(cfg),
                              engine_cfg=config.engine_config(cfg))
    csv_text = bench.rows_to_csv(rows)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(csv_text)
        print(f"wrote {len(rows)} rows to {args.out}")
    else:
        sys.stdout.write(csv_text)
    return 0


def cmd_report(args) -> int:
    with open(args.infile, encoding="utf-8") as fh:
        rows = bench.csv_to_rows(fh.read())
    if args.format == "csv":
        sys.stdout.write(bench.rows_to_csv(rows))
    else:
        sys.stdout.write(bench.rows_to_table(rows))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="veriflow",
        description="budget-aware reasoning search over exact synthetic domains")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-problems", help="generate a seeded problem corpus")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=50)
    p.add_argument("--vars", default="2-3", help="variable count, e.g. 2 or 2-3")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--no-bins", action="store_true",
                   help="skip difficulty binning")
    p.set_defaults(func=cmd_gen_problems)

    p = sub.add_parser("explore", help="collect verifier-labeled candidates")
    p.add_argument("--corpus", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True, help="dataset JSONL path")
    p.add_argument("--log", help="optional raw exploration log JSONL")
    p.set_defaults(func=cmd_explore)

    p = sub.add_parser("train", help="train the residual scorer")
    p.add_argument("--data", required=True)
    p.add_argument("--traj", help="trajectory JSONL (default: sibling of --data)")
    p.add_argument("--config")
    p.add_argument("--out-params", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("solve", help="solve one problem")
    p.add_argument("--problem", required=True, help="problem JSON/JSONL file")
    p.add_argument("--index", type=int, default=0, help="line in a JSONL corpus")
    p.add_argument("--params")
    p.add_argument("--policy")
    p.add_argument("--budget", type=int)
    p.add_argument("--config")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bench", help="benchmark drivers")
    bench_sub = p.add_subparsers(dest="bench_command", required=True)

    ps = bench_sub.add_parser("sweep", help="budget sweep from a spec file")
    ps.add_argument("--spec", required=True,
                    help="key=value file: corpus, budgets, policies, seeds, params, out")
    ps.set_defaults(func=cmd_bench_sweep)

    pa = bench_sub.add_parser("ablation", help="four-configuration ablation")
    pa.add_argument("--corpus", required=True)
    pa.add_argument("--params", required=True)
    pa.add_argument("--budget", type=int, default=32)
    pa.add_argument("--seeds", default="0,1,2,3,4")
    pa.add_argument("--config")
    pa.add_argument("--out")
    pa.set_defaults(func=cmd_bench_ablation)

    p = sub.add_parser("report", help="reformat a results CSV")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--format", choices=("csv", "table"), default="table")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
