import numpy as np

rng = np.random.default_rng(7)

# one reading per day, with a couple of sensor glitches
temps = rng.normal(loc=15, scale=9, size=30).round(1)
temps[[4, 19]] = [-35.0, 58.0]


def classify_temps(data):
    labels = np.empty(data.shape, dtype=object)
    labels[data < 0] = "Freezing"
    # TODO: remaining categories
    return labels


def clip_temps(data):
    pass


def compute_moving_avg(data, window_size):
    pass


def compute_weekly_avg(data):
    pass


if __name__ == "__main__":
    print(classify_temps(temps))
