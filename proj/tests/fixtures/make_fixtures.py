"""Regenerates the small CSV fixtures used by the unit and CLI tests."""
import datetime
import math
import random

rng = random.Random(20240501)


def dates(count, start=datetime.date(2021, 1, 4)):
    out, d = [], start
    while len(out) < count:
        if d.weekday() < 5:
            out.append(d.isoformat())
        d += datetime.timedelta(days=1)
    return out


def write(name, header, rows):
    with open(name, "w") as f:
        if header:
            f.write(",".join(header) + "\n")
        for r in rows:
            f.write(",".join(r) + "\n")


# Price panel: 6 tickers, 121 price rows, one-factor log returns.
tickers = ["AAA", "BBB", "CCC", "DDD", "EEE", "FFF"]
px = [100.0, 50.0, 20.0, 75.0, 10.0, 42.0]
rows = []
for day in dates(121):
    rows.append([day] + ["%.4f" % v for v in px])
    m = rng.gauss(0, 0.01)
    px = [v * math.exp(0.0002 + (0.6 + 0.1 * j) * m + rng.gauss(0, 0.012)) for j, v in enumerate(px)]
write("prices.csv", ["date"] + tickers, rows)

# Gap file: five price rows, the third missing one price.
write("prices_gap.csv", ["date", "X", "Y"], [
    ["2022-03-01", "100", "10"],
    ["2022-03-02", "110", "11"],
    ["2022-03-03", "NA", "12"],
    ["2022-03-04", "121", "9"],
    ["2022-03-07", "133.1", "9.9"],
])

write("prices_constant.csv", ["date", "X", "Y", "Z"],
      [[d, "10", "20", "30"] for d in dates(80)])

write("prices_unsorted.csv", ["date", "X"],
      [["2022-01-03", "1"], ["2022-01-05", "2"], ["2022-01-04", "3"]])

# Class data for the pool command.
def class_rows(n, p, scale):
    return [["%.6f" % (scale * rng.gauss(0, 1)) for _ in range(p)] for _ in range(n)]

write("class_a.csv", ["x1", "x2", "x3"], class_rows(8, 3, 1.0))
write("class_b.csv", None, class_rows(12, 3, 2.0))
write("class_p4.csv", ["x1", "x2", "x3", "x4"], class_rows(6, 4, 1.0))
write("class_complex.csv", ["x1_re", "x1_im", "x2_re", "x2_im"], class_rows(7, 4, 0.7))
write("class_complex_b.csv", ["x1_re", "x1_im", "x2_re", "x2_im"], class_rows(9, 4, 1.3))
