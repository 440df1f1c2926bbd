from functools import wraps


def log_plot_saving(func):
    """Report where a plotting helper wrote its figure, if it wrote one."""
    @wraps(func)
    def wrapper(*args, save_path=None, **kwargs):
        out = func(*args, save_path=save_path, **kwargs)
        if save_path is not None:
            print(f"📈 Figure saved → {save_path}")
        return out
    return wrapper


def log_artifact_saving(func):
    """Same contract for writers taking (object, path)."""
    @wraps(func)
    def wrapper(obj, path, *args, **kwargs):
        result = func(obj, path, *args, **kwargs)
        print(f"💾 {type(obj).__name__} written → {path}")
        return result
    return wrapper
