class Box:
    def __init__(self):
        self.a = 1
        self.b = 1

    def put(self, a, b):
        self.a = a
        self.b = b

    def ratio(self):
        return self.a // self.b


def double(x):
    return 2 * x


def spin():
    while True:
        pass
