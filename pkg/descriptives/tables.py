import pandas as pd
from tabulate import tabulate

from evaluation.suite import MetricReport


def metric_table(report: MetricReport) -> pd.DataFrame:
    """Fixed-order metric table: Metric | Mean | ±95% CI."""
    rows = [
        {"Metric": name, "Mean": mean, "±95% CI": ci if ci is not None else float("nan")}
        for name, mean, ci in report.summary_rows()
    ]
    return pd.DataFrame(rows)


def print_metric_report(report: MetricReport) -> None:
    print(f"\n### Metric report ({report.repetitions} repetitions)")
    print(tabulate(metric_table(report), headers="keys", tablefmt="github", floatfmt=".3f", showindex=False))
    print("AITS is measured on this machine and is not comparable with published timings.")

    for title, table in (("density", report.per_density), ("joint", report.per_joint)):
        if table:
            df = pd.DataFrame(table).T.reset_index().rename(columns={"index": title})
            print(f"\n### Control errors per {title}")
            print(tabulate(df, headers="keys", tablefmt="github", floatfmt=".3f", showindex=False))


def corpus_summary(summary: pd.DataFrame) -> pd.DataFrame:
    """Per-split sequence counts and length statistics from DatasetLoader.summary()."""
    return (
        summary.groupby("split")
        .agg(n_sequences=("id", "count"),
             mean_frames=("frames", "mean"),
             min_frames=("frames", "min"),
             max_frames=("frames", "max"),
             captions=("n_captions", "sum"))
        .reset_index()
    )


def print_corpus_summary(summary: pd.DataFrame) -> None:
    print("\n### Corpus")
    print(tabulate(corpus_summary(summary), headers="keys", tablefmt="github", floatfmt=".1f", showindex=False))


def training_summary(history: pd.DataFrame) -> pd.DataFrame:
    """Mean loss per epoch plus the learning rate at the epoch's last step."""
    return history.groupby("epoch").agg(loss=("loss", "mean"), lr=("lr", "last")).reset_index()


def print_training_summary(history: pd.DataFrame, name: str, last: int = 5) -> None:
    table = training_summary(history).tail(last)
    print(f"\n### {name}: last {len(table)} epochs")
    print(tabulate(table, headers="keys", tablefmt="github", floatfmt=".5f", showindex=False))
