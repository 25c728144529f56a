from .data import MinMaxScaler, StandardScaler
from .label import LabelEncoder
