"""ReFocus forecasting toolkit"""
