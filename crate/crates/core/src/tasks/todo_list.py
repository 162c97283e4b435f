from datetime import datetime


class Task:
    def __init__(self, description, category, priority, date_due=None):
        self.description = description
        self.category = category
        self.priority = priority
        self.date_due = date_due
        self.completed = False

    def __str__(self):
        status = "x" if self.completed else " "
        due = f" due {self.date_due:%Y-%m-%d}" if self.date_due else ""
        return f"[{status}] {self.description} ({self.category}, {self.priority}){due}"


class ToDoList:
    def __init__(self):
        self.tasks = []

    def add_task(self, description, category, priority, date_due=None):
        if priority not in ("High", "Medium", "Low"):
            raise ValueError("priority must be High, Medium or Low")
        task = Task(description, category, priority, date_due)
        self.tasks.append(task)
        return task

    def complete_task(self, description):
        for task in self.tasks:
            if task.description == description:
                task.completed = True
                return True
        return False

    def edit_task(self, description, **changes):
        matches = [t for t in self.tasks if t.description == description]
        for task in self.tasks:
            for match in matches:
                if task is match:
                    for key, value in changes.items():
                        setattr(task, key, value)

    def remove_task(self, description):
        for i in range(len(self.tasks)):
            if self.tasks[i].description == description:
                del self.tasks[i + 1]
                return True
        return False

    def list_all(self):
        for task in self.tasks:
            print(task)


if __name__ == "__main__":
    todo = ToDoList()
    todo.add_task("Write report", "work", "High", datetime(2030, 1, 15))
    todo.add_task("Buy milk", "home", "Low")
    todo.list_all()
