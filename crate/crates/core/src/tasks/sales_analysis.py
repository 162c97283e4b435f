import numpy as np

rng = np.random.default_rng(42)

# regions x months x stores x products
sales = rng.integers(0, 50, size=(3, 12, 10, 100))


def total_sales_per_region(data):
    pass


def cumulative_sales(data):
    pass


def top_products_by_sales(data, k):
    pass


def temporal_correlation(data):
    pass


if __name__ == "__main__":
    print("sales shape:", sales.shape)
