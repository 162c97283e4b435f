class Store:
    def __init__(self, name):
        self.name = name
        self.products = {}
        self.orders = {}
        self._next_order_id = 1

    def add_product(self, product):
        if product.product_id in self.products:
            raise ValueError(f"duplicate product id {product.product_id}")
        self.products[product.product_id] = product

    def remove_product(self, product_id):
        self.products.pop(product_id, None)

    def restock(self, product_id, quantity):
        self.products[product_id].stock += quantity

    def place_order(self, customer, items):
        """items maps product_id -> quantity"""
        for product_id, quantity in items.items():
            product = self.products.get(product_id)
            if product is None:
                raise KeyError(f"unknown product {product_id}")
            if product.stock < quantity:
                raise ValueError(f"not enough {product.name} in stock")
        order = Order(self._next_order_id, customer)
        for product_id, quantity in items.items():
            product = self.products[product_id]
            product.stock -= quantity
            order.add_item(product, quantity)
        self.orders[order.order_id] = order
        self._next_order_id += 1
        return order

    def order_total(self, order_id):
        return self.orders[order_id].total()

    def inventory_report(self):
        for product in sorted(self.products.values(), key=lambda p: p.name):
            print(f"{product.name:<20} {product.stock:>5} @ {product.price:.2f}")


if __name__ == "__main__":
    print("Store module loaded")
