"""
This module exposes Adam, the optimizer shared by classifier training,
upsampler training and the C&W attacks.

Example:
        opt = Adam(learning_rate=0.001)
        params = opt.step(params, grads)
"""

import numpy as np


class Adam:
    """
    Adam over a dict of numpy arrays

    Args:
        learning_rate (float): step size
        beta1 (float): first-moment decay
        beta2 (float): second-moment decay
        eps (float): denominator guard

    Attributes:
        t (int): number of steps taken
        m (dict): first moments, keyed like the parameters
        v (dict): second moments, keyed like the parameters
    """
    def __init__(self, learning_rate=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, params, grads):
        """
        Updates `params` in place and returns it

        Args:
            params (dict): name -> array
            grads (dict): name -> gradient array, same shapes

        Returns:
            dict: the updated params
        """
        self.t += 1
        correction1 = 1 - self.beta1 ** self.t
        correction2 = 1 - self.beta2 ** self.t
        for name, g in grads.items():
            if name not in self.m:
                self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * g * g
            m_hat = self.m[name] / correction1
            v_hat = self.v[name] / correction2
            params[name] -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)
        return params
