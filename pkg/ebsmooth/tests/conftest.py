import pytest
import torch


@pytest.fixture(scope="function", autouse=True)
def assert_default_dtype_unchanged():
    """meta-test to ensure no test changes torch's global default dtype"""

    dtype = torch.get_default_dtype()
    yield None

    if torch.get_default_dtype() != dtype:
        torch.set_default_dtype(dtype)
        raise RuntimeError(f"test changed the default dtype of torch from {dtype}")
