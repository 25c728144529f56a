from .login import login_user
